#include "episignal/cluster.hpp"
#include "episignal/core/error.hpp"
#include "episignal/dimred.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace episignal::cluster {

const char* algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::hdbscan: return "hdbscan";
        case Algorithm::km: return "km";
        case Algorithm::gmm: return "gmm";
    }
    return "?";
}

int ClusterModel::noise_count() const {
    return int(std::count(labels.begin(), labels.end(), -1));
}

const ClusterInfo* ClusterModel::find(int id) const {
    for (const auto& c : clusters)
        if (c.id == id) return &c;
    return nullptr;
}

std::vector<double> core_distances(const Matrix& X, int min_samples) {
    if (min_samples < 1) throw ValidationError("core_distances: min_samples must be >= 1");
    if (X.rows() <= min_samples)
        throw ValidationError("core_distances: need more points (" + std::to_string(X.rows()) +
                              ") than min_samples (" + std::to_string(min_samples) + ")");
    auto knn = dimred::exact_knn(X, min_samples);
    std::vector<double> core(std::size_t(X.rows()));
    for (std::size_t i = 0; i < core.size(); ++i) core[i] = knn.dist[i].back();
    return core;
}

std::vector<MstEdge> build_mst(const Matrix& X, const std::vector<double>& core) {
    const int n = int(X.rows());
    if (std::size_t(n) != core.size())
        throw DimensionError("build_mst: " + std::to_string(core.size()) + " core distances for " +
                             std::to_string(n) + " points");
    std::vector<MstEdge> edges;
    if (n < 2) return edges;
    const int dim = int(X.cols());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<char> in_tree(static_cast<std::size_t>(n), 0);
    std::vector<double> best(static_cast<std::size_t>(n), inf);
    std::vector<int> from(static_cast<std::size_t>(n), -1);
    int cur = 0;
    in_tree[0] = 1;
    edges.reserve(std::size_t(n - 1));
    for (int step = 1; step < n; ++step) {
        const double* xc = X.row(cur).data();
        int next = -1;
        double next_w = inf;
        for (int j = 0; j < n; ++j) {
            if (in_tree[std::size_t(j)]) continue;
            const double* xj = X.row(j).data();
            double s = 0.0;
            for (int c = 0; c < dim; ++c) {
                double d = xc[c] - xj[c];
                s += d * d;
            }
            double w = std::max({std::sqrt(s), core[std::size_t(cur)], core[std::size_t(j)]});
            if (w < best[std::size_t(j)]) {
                best[std::size_t(j)] = w;
                from[std::size_t(j)] = cur;
            }
            if (best[std::size_t(j)] < next_w) {
                next_w = best[std::size_t(j)];
                next = j;
            }
        }
        in_tree[std::size_t(next)] = 1;
        int f = from[std::size_t(next)];
        edges.push_back({std::min(f, next), std::max(f, next), next_w});
        cur = next;
    }
    std::sort(edges.begin(), edges.end(), [](const MstEdge& x, const MstEdge& y) {
        if (x.weight != y.weight) return x.weight < y.weight;
        return x.a != y.a ? x.a < y.a : x.b < y.b;
    });
    return edges;
}

namespace {

struct Dendrogram {
    int n = 0;
    std::vector<int> left, right, size;
    std::vector<double> dist;

    int node_size(int node) const { return node < n ? 1 : size[std::size_t(node - n)]; }

    // Leaves under `node`.
    void leaves(int node, std::vector<int>& out) const {
        std::vector<int> stack{node};
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            if (v < n) {
                out.push_back(v);
            } else {
                stack.push_back(right[std::size_t(v - n)]);
                stack.push_back(left[std::size_t(v - n)]);
            }
        }
    }
};

Dendrogram single_linkage(const std::vector<MstEdge>& mst, int n) {
    Dendrogram d;
    d.n = n;
    std::vector<int> parent(static_cast<std::size_t>(2 * n - 1));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[std::size_t(x)] != x) {
            parent[std::size_t(x)] = parent[std::size_t(parent[std::size_t(x)])];
            x = parent[std::size_t(x)];
        }
        return x;
    };
    std::vector<MstEdge> sorted = mst;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const MstEdge& x, const MstEdge& y) { return x.weight < y.weight; });
    int next = n;
    for (const auto& e : sorted) {
        int ra = find(e.a), rb = find(e.b);
        if (ra == rb) throw ValidationError("condense_and_extract: edge list contains a cycle");
        d.left.push_back(ra);
        d.right.push_back(rb);
        d.dist.push_back(e.weight);
        d.size.push_back(d.node_size(ra) + d.node_size(rb));
        parent[std::size_t(ra)] = next;
        parent[std::size_t(rb)] = next;
        ++next;
    }
    return d;
}

struct Record {
    int parent;
    int child;  // point index, or -(cluster id) - 1
    double lambda;
    int child_size;
};

double lambda_of(double dist) { return 1.0 / std::max(dist, 1e-12); }

}  // namespace

ClusterModel condense_and_extract(const std::vector<MstEdge>& mst, int n, const HdbscanParams& params) {
    const int mcs = params.min_cluster_size;
    if (mcs < 2) throw ValidationError("condense_and_extract: min_cluster_size must be >= 2");
    if (n < 1) throw ValidationError("condense_and_extract: no points");
    if (int(mst.size()) != n - 1)
        throw ValidationError("condense_and_extract: expected " + std::to_string(n - 1) + " edges, got " +
                              std::to_string(mst.size()));
    for (const auto& e : mst)
        if (e.a < 0 || e.b < 0 || e.a >= n || e.b >= n)
            throw ValidationError("condense_and_extract: edge endpoint out of range");

    ClusterModel model;
    model.algorithm = Algorithm::hdbscan;
    model.hdbscan = params;
    model.labels.assign(std::size_t(n), -1);

    std::vector<CondensedNode>& tree = model.tree;
    tree.push_back({});
    tree[0].id = 0;
    tree[0].size = n;
    std::vector<Record> records;

    if (n > 1) {
        Dendrogram d = single_linkage(mst, n);
        const int root = 2 * n - 2;
        std::vector<int> relabel(static_cast<std::size_t>(2 * n - 1), -1);
        relabel[std::size_t(root)] = 0;
        std::vector<int> queue{root};
        std::vector<int> fallen;
        auto points_fall = [&](int sub, int cluster, double lam) {
            fallen.clear();
            d.leaves(sub, fallen);
            for (int p : fallen) records.push_back({cluster, p, lam, 1});
        };
        for (std::size_t qi = 0; qi < queue.size(); ++qi) {
            const int node = queue[qi];
            const int c = relabel[std::size_t(node)];
            const int l = d.left[std::size_t(node - n)], r = d.right[std::size_t(node - n)];
            const double lam = lambda_of(d.dist[std::size_t(node - n)]);
            const int ls = d.node_size(l), rs = d.node_size(r);
            if (ls >= mcs && rs >= mcs) {
                for (int side : {l, r}) {
                    int id = int(tree.size());
                    CondensedNode child;
                    child.id = id;
                    child.parent = c;
                    child.lambda_birth = lam;
                    child.size = d.node_size(side);
                    tree.push_back(child);
                    tree[std::size_t(c)].children.push_back(id);
                    relabel[std::size_t(side)] = id;
                    records.push_back({c, -id - 1, lam, child.size});
                    queue.push_back(side);
                }
            } else {
                for (int side : {l, r}) {
                    if (d.node_size(side) >= mcs) {
                        relabel[std::size_t(side)] = c;
                        queue.push_back(side);
                    } else {
                        points_fall(side, c, lam);
                    }
                }
            }
        }
    } else {
        records.push_back({0, 0, std::numeric_limits<double>::max(), 1});
    }

    // Stability from the flat record list: every record charges (lambda - birth) per member.
    for (const auto& rec : records) {
        auto& node = tree[std::size_t(rec.parent)];
        node.stability += (rec.lambda - node.lambda_birth) * double(rec.child_size);
        node.lambda_death = std::max(node.lambda_death, rec.lambda);
        if (rec.child >= 0) node.points.emplace_back(rec.child, rec.lambda);
    }
    for (auto& node : tree) node.lambda_death = std::max(node.lambda_death, node.lambda_birth);

    // Excess of mass, leaves first (children always carry larger ids than parents).
    const bool root_ok = params.allow_single_cluster && n >= mcs;
    std::vector<double> best(tree.size(), 0.0);
    for (int id = int(tree.size()) - 1; id >= 0; --id) {
        auto& node = tree[std::size_t(id)];
        double below = 0.0;
        for (int ch : node.children) below += best[std::size_t(ch)];
        const bool eligible = id != 0 || root_ok;
        if (eligible && (node.children.empty() || node.stability >= below)) {
            node.selected = true;
            best[std::size_t(id)] = node.stability;
            std::vector<int> stack(node.children.begin(), node.children.end());
            while (!stack.empty()) {
                int v = stack.back();
                stack.pop_back();
                tree[std::size_t(v)].selected = false;
                for (int ch : tree[std::size_t(v)].children) stack.push_back(ch);
            }
        } else {
            best[std::size_t(id)] = below;
        }
    }

    std::vector<int> out_id(tree.size(), -1);
    for (const auto& node : tree) {
        if (!node.selected) continue;
        out_id[std::size_t(node.id)] = int(model.clusters.size());
        model.clusters.push_back({int(model.clusters.size()), 0, node.stability, node.lambda_birth});
    }
    for (const auto& node : tree) {
        for (auto [p, lam] : node.points) {
            (void)lam;
            int c = node.id;
            while (true) {
                if (tree[std::size_t(c)].selected) {
                    model.labels[std::size_t(p)] = out_id[std::size_t(c)];
                    break;
                }
                if (!tree[std::size_t(c)].parent) break;
                c = *tree[std::size_t(c)].parent;
            }
        }
    }
    for (int lab : model.labels)
        if (lab >= 0) ++model.clusters[std::size_t(lab)].size;
    return model;
}

ClusterModel fit_hdbscan(const Matrix& X, const HdbscanParams& params) {
    if (params.min_cluster_size < 2) throw ValidationError("fit_hdbscan: min_cluster_size must be >= 2");
    if (!X.allFinite()) throw ValidationError("fit_hdbscan: input contains non-finite values");
    auto core = core_distances(X, params.effective_min_samples());
    auto mst = build_mst(X, core);
    ClusterModel model = condense_and_extract(mst, int(X.rows()), params);
    model.reference = X;
    model.core = std::move(core);
    model.mst = std::move(mst);
    return model;
}

std::vector<int> assign_new(const ClusterModel& model, const Matrix& Y) {
    if (model.algorithm != Algorithm::hdbscan) throw ValidationError("assign_new: model is not hdbscan");
    if (model.reference.rows() == 0) throw ValidationError("assign_new: model carries no reference coordinates");
    if (Y.cols() != model.reference.cols())
        throw DimensionError("assign_new: points have " + std::to_string(Y.cols()) + " columns, model has " +
                             std::to_string(model.reference.cols()));
    std::vector<int> out(std::size_t(Y.rows()), -1);
    if (Y.rows() == 0) return out;
    auto knn = dimred::exact_knn(model.reference, Y, 1);
    for (Eigen::Index q = 0; q < Y.rows(); ++q) {
        const int r = knn.index[std::size_t(q)][0];
        const int lab = model.labels[std::size_t(r)];
        if (lab < 0) continue;
        const double reach = std::max(knn.dist[std::size_t(q)][0], model.core[std::size_t(r)]);
        const double lam = lambda_of(reach);
        const ClusterInfo* info = model.find(lab);
        if (info && lam >= info->lambda_birth) out[std::size_t(q)] = lab;
    }
    return out;
}

}  // namespace episignal::cluster
