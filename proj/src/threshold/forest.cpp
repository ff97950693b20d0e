#include "episignal/core/error.hpp"
#include "episignal/threshold.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace episignal::threshold {

namespace {

double gini(int n1, int n) {
    if (n == 0) return 0.0;
    double p = double(n1) / double(n);
    return 2.0 * p * (1.0 - p);
}

struct Split {
    int feature = -1;
    double threshold = 0.0;
    double score = -1.0;  // weighted child impurity drop at this node
};

class TreeBuilder {
public:
    TreeBuilder(const Matrix& X, std::span<const int> y, const ForestParams& p, std::mt19937_64& rng)
        : X_(X), y_(y), p_(p), rng_(rng), n_features_(int(X.cols())),
          mtry_(std::max(1, int(std::ceil(std::sqrt(double(X.cols())))))) {}

    Tree build(std::vector<int> sample) {
        Tree tree;
        tree.bootstrap = sample;
        total_ = double(sample.size());
        struct Task {
            int node;
            std::vector<int> idx;
        };
        tree.nodes.push_back(make_node(sample, 0));
        std::vector<Task> stack;
        stack.push_back({0, std::move(sample)});
        while (!stack.empty()) {
            Task task = std::move(stack.back());
            stack.pop_back();
            TreeNode& node = tree.nodes[std::size_t(task.node)];
            const int n = int(task.idx.size());
            if (node.depth >= p_.max_depth || n < p_.min_samples_split || node.impurity == 0.0) continue;
            Split s = best_split(task.idx, node.impurity);
            if (s.feature < 0) continue;

            std::vector<int> li, ri;
            for (int i : task.idx) (X_(i, s.feature) <= s.threshold ? li : ri).push_back(i);
            TreeNode left = make_node(li, node.depth + 1);
            TreeNode right = make_node(ri, node.depth + 1);
            {
                TreeNode& cur = tree.nodes[std::size_t(task.node)];
                cur.feature = s.feature;
                cur.threshold = s.threshold;
                cur.gini_decrease = (double(n) / total_) *
                                    (cur.impurity - (double(li.size()) / double(n)) * left.impurity -
                                     (double(ri.size()) / double(n)) * right.impurity);
                cur.left = int(tree.nodes.size());
                cur.right = cur.left + 1;
            }
            const int lid = int(tree.nodes.size());
            tree.nodes.push_back(left);
            tree.nodes.push_back(right);
            stack.push_back({lid + 1, std::move(ri)});
            stack.push_back({lid, std::move(li)});
        }
        return tree;
    }

private:
    TreeNode make_node(const std::vector<int>& idx, int depth) const {
        TreeNode node;
        node.depth = depth;
        node.n_samples = int(idx.size());
        int n1 = 0;
        for (int i : idx) n1 += y_[std::size_t(i)];
        node.impurity = gini(n1, node.n_samples);
        node.value = node.n_samples ? double(n1) / double(node.n_samples) : 0.0;
        return node;
    }

    // Best split over mtry random features; keeps drawing features while none of
    // the drawn ones can split the node.
    Split best_split(const std::vector<int>& idx, double parent_impurity) {
        std::vector<int> order(static_cast<std::size_t>(n_features_));
        std::iota(order.begin(), order.end(), 0);
        Split best;
        int visited = 0, usable = 0;
        std::vector<std::pair<double, int>> col(idx.size());
        const int n = int(idx.size());
        int n1_total = 0;
        for (int i : idx) n1_total += y_[std::size_t(i)];
        while (visited < n_features_ && (usable < mtry_ || best.feature < 0)) {
            std::uniform_int_distribution<int> pick(visited, n_features_ - 1);
            std::swap(order[std::size_t(visited)], order[std::size_t(pick(rng_))]);
            const int f = order[std::size_t(visited++)];
            for (std::size_t t = 0; t < idx.size(); ++t) col[t] = {X_(idx[t], f), y_[std::size_t(idx[t])]};
            std::sort(col.begin(), col.end());
            if (col.front().first == col.back().first) continue;
            ++usable;
            int left_n1 = 0;
            for (int t = 0; t + 1 < n; ++t) {
                left_n1 += col[std::size_t(t)].second;
                if (col[std::size_t(t)].first == col[std::size_t(t + 1)].first) continue;
                const int ln = t + 1, rn = n - ln;
                double child = (double(ln) * gini(left_n1, ln) + double(rn) * gini(n1_total - left_n1, rn)) / double(n);
                double score = parent_impurity - child;
                if (score > best.score) {
                    best.score = score;
                    best.feature = f;
                    double mid = 0.5 * (col[std::size_t(t)].first + col[std::size_t(t + 1)].first);
                    // Midpoint can round onto the upper value for adjacent doubles.
                    best.threshold = mid < col[std::size_t(t + 1)].first ? mid : col[std::size_t(t)].first;
                }
            }
        }
        return best;
    }

    const Matrix& X_;
    std::span<const int> y_;
    const ForestParams& p_;
    std::mt19937_64& rng_;
    double total_ = 0.0;
    int n_features_;
    int mtry_;
};

}  // namespace

int Tree::predict(const double* row) const {
    int cur = 0;
    while (nodes[std::size_t(cur)].feature >= 0) {
        const auto& nd = nodes[std::size_t(cur)];
        cur = row[nd.feature] <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[std::size_t(cur)].value > 0.5 ? 1 : 0;
}

int Tree::depth() const {
    int d = 0;
    for (const auto& nd : nodes) d = std::max(d, nd.depth);
    return d;
}

int ForestModel::predict(const double* row) const {
    int votes = 0;
    for (const auto& t : trees) votes += t.predict(row);
    return 2 * votes > int(trees.size()) ? 1 : 0;
}

std::vector<int> ForestModel::predict(const Matrix& X) const {
    if (X.cols() != Eigen::Index(names.size()))
        throw DimensionError("forest predict: " + std::to_string(X.cols()) + " columns, model has " +
                             std::to_string(names.size()));
    std::vector<int> out(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) out[std::size_t(i)] = predict(X.row(i).data());
    return out;
}

ForestModel train_forest(const Matrix& X, std::span<const int> y, std::span<const std::string> names,
                         const ForestParams& params) {
    if (X.rows() < 10) throw ValidationError("train_forest: need at least 10 training rows, got " + std::to_string(X.rows()));
    if (std::size_t(X.rows()) != y.size()) throw DimensionError("train_forest: label count does not match rows");
    if (std::size_t(X.cols()) != names.size()) throw DimensionError("train_forest: name count does not match columns");
    if (X.cols() == 0) throw ValidationError("train_forest: no features");
    if (params.n_trees < 1 || params.max_depth < 1) throw ValidationError("train_forest: bad forest parameters");
    if (!X.allFinite()) throw ValidationError("train_forest: non-finite feature values");

    ForestModel model;
    model.params = params;
    model.names.assign(names.begin(), names.end());
    const int n = int(X.rows());
    for (int t = 0; t < params.n_trees; ++t) {
        std::mt19937_64 rng(params.seed + std::uint64_t(t));
        std::uniform_int_distribution<int> draw(0, n - 1);
        std::vector<int> sample(static_cast<std::size_t>(n));
        for (auto& s : sample) s = draw(rng);
        std::sort(sample.begin(), sample.end());
        TreeBuilder builder(X, y, params, rng);
        model.trees.push_back(builder.build(std::move(sample)));
    }
    return model;
}

ForestModel train_forest(const ThresholdDataset& ds, const ForestParams& params) {
    auto idx = ds.indices(false);
    Matrix X = ds.rows_of(idx);
    auto y = ds.labels_of(idx);
    return train_forest(X, y, ds.names, params);
}

double evaluate(const ForestModel& model, const ThresholdDataset& ds) {
    auto idx = ds.indices(true);
    if (ds.test.empty() || idx.empty()) throw ValidationError("evaluate: dataset has no test rows");
    auto pred = model.predict(ds.rows_of(idx));
    int correct = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) correct += pred[i] == ds.y[std::size_t(idx[i])];
    return double(correct) / double(idx.size());
}

std::vector<double> feature_importances(const ForestModel& model) {
    std::vector<double> imp(model.names.size(), 0.0);
    std::vector<double> per(imp.size());
    for (const auto& t : model.trees) {
        std::fill(per.begin(), per.end(), 0.0);
        double tree_total = 0.0;
        for (const auto& nd : t.nodes)
            if (nd.feature >= 0) {
                per[std::size_t(nd.feature)] += nd.gini_decrease;
                tree_total += nd.gini_decrease;
            }
        if (tree_total <= 0.0) continue;
        for (std::size_t c = 0; c < imp.size(); ++c) imp[c] += per[c] / tree_total / double(model.trees.size());
    }
    double total = 0.0;
    for (double v : imp) total += v;
    if (total > 0.0)
        for (double& v : imp) v /= total;
    return imp;
}

std::map<std::string, double> grouped_importance(const ForestModel& model,
                                                 const std::map<std::string, std::string>& groups) {
    std::set<std::string> known(model.names.begin(), model.names.end());
    for (const auto& [name, tag] : groups)
        if (!known.count(name)) throw ValidationError("grouped_importance: unknown feature '" + name + "'");
    auto imp = feature_importances(model);
    std::map<std::string, double> out;
    for (const auto& [name, tag] : groups) out[tag] = 0.0;
    for (std::size_t i = 0; i < model.names.size(); ++i) {
        auto it = groups.find(model.names[i]);
        if (it == groups.end())
            throw ValidationError("grouped_importance: feature '" + model.names[i] + "' has no group");
        out[it->second] += imp[i];
    }
    return out;
}

}  // namespace episignal::threshold
