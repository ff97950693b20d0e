#include "episignal/core/error.hpp"
#include "episignal/dimred.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace episignal::dimred {

void UmapParams::validate() const {
    if (n_neighbors < 2) throw ValidationError("umap: n_neighbors must be >= 2");
    if (!(min_dist >= 0.0 && min_dist < 1.0)) throw ValidationError("umap: min_dist must be in [0, 1)");
    if (n_epochs < 1) throw ValidationError("umap: n_epochs must be >= 1");
    if (out_dim < 1) throw ValidationError("umap: out_dim must be >= 1");
    if (!(spread > 0.0)) throw ValidationError("umap: spread must be positive");
}

namespace {

// Candidate list from the Gram expansion, then exact distances for the survivors.
Knn knn_impl(const Matrix& X, const Matrix& Q, int k, bool exclude_self) {
    const Eigen::Index n = X.rows(), m = Q.rows();
    const int want = k + (exclude_self ? 1 : 0);
    if (want > n) throw ValidationError("knn: k=" + std::to_string(k) + " exceeds available points");
    const int cand = std::min<Eigen::Index>(n, want + 8);

    Vector xn = X.rowwise().squaredNorm();
    Knn out;
    out.index.resize(std::size_t(m));
    out.dist.resize(std::size_t(m));
    constexpr Eigen::Index block = 256;
    std::vector<int> order(static_cast<std::size_t>(n));
    for (Eigen::Index b0 = 0; b0 < m; b0 += block) {
        const Eigen::Index bs = std::min(block, m - b0);
        Eigen::MatrixXd g = Q.middleRows(b0, bs) * X.transpose();
        for (Eigen::Index r = 0; r < bs; ++r) {
            const Eigen::Index qi = b0 + r;
            const double qn = Q.row(qi).squaredNorm();
            auto approx = [&](int j) { return qn + xn(j) - 2.0 * g(r, j); };
            std::iota(order.begin(), order.end(), 0);
            std::nth_element(order.begin(), order.begin() + (cand - 1), order.end(),
                             [&](int a, int c) { return approx(a) < approx(c); });
            std::vector<std::pair<double, int>> exact;
            exact.reserve(std::size_t(cand));
            for (int t = 0; t < cand; ++t) {
                int j = order[std::size_t(t)];
                if (exclude_self && j == qi) continue;
                exact.emplace_back(std::sqrt((Q.row(qi) - X.row(j)).squaredNorm()), j);
            }
            std::sort(exact.begin(), exact.end());
            auto& idx = out.index[std::size_t(qi)];
            auto& dst = out.dist[std::size_t(qi)];
            for (int t = 0; t < k; ++t) {
                idx.push_back(exact[std::size_t(t)].second);
                dst.push_back(exact[std::size_t(t)].first);
            }
        }
    }
    return out;
}

inline double clip4(double v) { return std::clamp(v, -4.0, 4.0); }

Matrix rescale_init(Matrix init) {
    for (Eigen::Index c = 0; c < init.cols(); ++c) {
        double lo = init.col(c).minCoeff(), hi = init.col(c).maxCoeff();
        double span = hi - lo > 0 ? hi - lo : 1.0;
        init.col(c) = (10.0 * (init.col(c).array() - lo) / span).matrix();
    }
    return init;
}

struct Edge {
    int head;
    int tail;
    double weight;
};

}  // namespace

Knn exact_knn(const Matrix& X, int k) { return knn_impl(X, X, k, true); }
Knn exact_knn(const Matrix& X, const Matrix& Q, int k) { return knn_impl(X, Q, k, false); }

std::pair<double, double> smooth_knn(const std::vector<double>& dists, int k) {
    constexpr double tolerance = 1e-5;
    constexpr double min_scale = 1e-3;
    const double target = std::log2(double(k));
    double rho = 0.0;
    for (double d : dists)
        if (d > 0.0) {
            rho = d;
            break;
        }
    double lo = 0.0, hi = std::numeric_limits<double>::infinity(), mid = 1.0;
    for (int it = 0; it < 64; ++it) {
        double psum = 0.0;
        for (double d : dists) psum += std::exp(-std::max(0.0, d - rho) / mid);
        if (std::fabs(psum - target) < tolerance) break;
        if (psum > target) {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = std::isinf(hi) ? mid * 2.0 : (lo + hi) / 2.0;
        }
    }
    double mean = 0.0;
    for (double d : dists) mean += d;
    mean = dists.empty() ? 0.0 : mean / double(dists.size());
    mid = std::max(mid, min_scale * mean);
    if (!(mid > 0.0)) mid = 1e-12;
    return {rho, mid};
}

std::pair<double, double> fit_ab(double spread, double min_dist) {
    constexpr int npts = 300;
    std::vector<double> xs(npts), ys(npts);
    for (int i = 0; i < npts; ++i) {
        xs[std::size_t(i)] = spread * 3.0 * double(i) / double(npts - 1);
        double x = xs[std::size_t(i)];
        ys[std::size_t(i)] = x < min_dist ? 1.0 : std::exp(-(x - min_dist) / spread);
    }
    auto residuals = [&](double a, double b, Eigen::VectorXd& r, Eigen::MatrixXd* J) {
        r.resize(npts);
        if (J) J->resize(npts, 2);
        for (int i = 0; i < npts; ++i) {
            double x = xs[std::size_t(i)];
            double p = x > 0.0 ? std::pow(x, 2.0 * b) : 0.0;
            double den = 1.0 + a * p;
            r(i) = 1.0 / den - ys[std::size_t(i)];
            if (J) {
                (*J)(i, 0) = -p / (den * den);
                (*J)(i, 1) = x > 0.0 ? -a * p * 2.0 * std::log(x) / (den * den) : 0.0;
            }
        }
    };
    double a = 1.0, b = 1.0, lambda = 1e-3;
    Eigen::VectorXd r, rn;
    Eigen::MatrixXd J;
    residuals(a, b, r, &J);
    double cost = r.squaredNorm();
    for (int it = 0; it < 500; ++it) {
        Eigen::Matrix2d H = J.transpose() * J;
        Eigen::Vector2d g = J.transpose() * r;
        Eigen::Matrix2d A = H;
        A.diagonal() *= (1.0 + lambda);
        Eigen::Vector2d step = A.ldlt().solve(-g);
        double na = a + step(0), nb = b + step(1);
        if (na <= 0 || nb <= 0) {
            lambda *= 10;
            continue;
        }
        residuals(na, nb, rn, nullptr);
        double ncost = rn.squaredNorm();
        if (ncost < cost) {
            bool done = std::fabs(cost - ncost) < 1e-15 * std::max(1.0, cost) && step.norm() < 1e-12;
            a = na;
            b = nb;
            cost = ncost;
            residuals(a, b, r, &J);
            lambda = std::max(lambda / 10.0, 1e-12);
            if (done) break;
        } else {
            lambda *= 10.0;
            if (lambda > 1e12) break;
        }
    }
    return {a, b};
}

Projection fit_umap(const Matrix& X, const UmapParams& p) {
    p.validate();
    const Eigen::Index n = X.rows();
    const int k = p.n_neighbors;
    if (n <= k)
        throw ValidationError("fit_umap: need more points (" + std::to_string(n) + ") than n_neighbors (" +
                              std::to_string(k) + ")");
    if (p.out_dim >= X.cols())
        throw ValidationError("fit_umap: out_dim must be below the input dimension");
    if (!X.allFinite()) throw ValidationError("fit_umap: input contains non-finite values");

    // Fuzzy simplicial set.
    Knn knn = exact_knn(X, k);
    std::vector<std::vector<std::pair<int, double>>> rows(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        auto [rho, sigma] = smooth_knn(knn.dist[std::size_t(i)], k);
        for (int t = 0; t < k; ++t) {
            double d = knn.dist[std::size_t(i)][std::size_t(t)];
            double w = std::exp(-std::max(0.0, d - rho) / sigma);
            rows[std::size_t(i)].emplace_back(knn.index[std::size_t(i)][std::size_t(t)], w);
        }
        std::sort(rows[std::size_t(i)].begin(), rows[std::size_t(i)].end());
    }
    auto lookup = [&](int i, int j) {
        const auto& r = rows[std::size_t(i)];
        auto it = std::lower_bound(r.begin(), r.end(), std::make_pair(j, -1.0));
        return (it != r.end() && it->first == j) ? it->second : 0.0;
    };
    std::vector<Edge> edges;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (auto [j, wij] : rows[std::size_t(i)]) {
            double wji = lookup(j, int(i));
            double w = wij + wji - wij * wji;
            edges.push_back({int(i), j, w});
            // (j, i) appears from row j when i is also in j's neighbourhood; otherwise add it here.
            if (wji == 0.0) edges.push_back({j, int(i), w});
        }
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
        return x.head != y.head ? x.head < y.head : x.tail < y.tail;
    });

    double wmax = 0.0;
    for (const auto& e : edges) wmax = std::max(wmax, e.weight);
    const double cutoff = wmax / double(p.n_epochs);
    std::erase_if(edges, [&](const Edge& e) { return e.weight < cutoff; });

    const std::size_t ne = edges.size();
    std::vector<double> eps(ne), eps_neg(ne), next(ne), next_neg(ne);
    for (std::size_t e = 0; e < ne; ++e) {
        eps[e] = wmax / edges[e].weight;
        eps_neg[e] = eps[e] / double(p.negative_sample_rate);
        next[e] = eps[e];
        next_neg[e] = eps_neg[e];
    }

    auto [a, b] = fit_ab(p.spread, p.min_dist);

    Projection pca = fit_pca(X, p.out_dim);
    Matrix Y = rescale_init(transform(pca, X));

    std::mt19937_64 rng(p.seed);
    const int dim = p.out_dim;
    std::vector<double> diff(static_cast<std::size_t>(dim));
    for (int epoch = 0; epoch < p.n_epochs; ++epoch) {
        const double alpha = p.learning_rate * (1.0 - double(epoch) / double(p.n_epochs));
        for (std::size_t e = 0; e < ne; ++e) {
            if (next[e] > double(epoch)) continue;
            const int j = edges[e].head, kk = edges[e].tail;
            double* cur = Y.row(j).data();
            double* oth = Y.row(kk).data();
            double d2 = 0.0;
            for (int c = 0; c < dim; ++c) {
                diff[std::size_t(c)] = cur[c] - oth[c];
                d2 += diff[std::size_t(c)] * diff[std::size_t(c)];
            }
            double coef = d2 > 0.0 ? (-2.0 * a * b * std::pow(d2, b - 1.0)) / (a * std::pow(d2, b) + 1.0) : 0.0;
            for (int c = 0; c < dim; ++c) {
                double g = clip4(coef * diff[std::size_t(c)]);
                cur[c] += g * alpha;
                oth[c] -= g * alpha;
            }
            next[e] += eps[e];

            const int n_neg = int((double(epoch) - next_neg[e]) / eps_neg[e]);
            for (int s = 0; s < n_neg; ++s) {
                const int t = int(rng() % std::uint64_t(n));
                if (t == j) continue;
                const double* o = Y.row(t).data();
                d2 = 0.0;
                for (int c = 0; c < dim; ++c) {
                    diff[std::size_t(c)] = cur[c] - o[c];
                    d2 += diff[std::size_t(c)] * diff[std::size_t(c)];
                }
                double rc = d2 > 0.0 ? (2.0 * b) / ((0.001 + d2) * (a * std::pow(d2, b) + 1.0)) : 0.0;
                for (int c = 0; c < dim; ++c) {
                    double g = rc > 0.0 ? clip4(rc * diff[std::size_t(c)]) : 4.0;
                    cur[c] += g * alpha;
                }
            }
            if (n_neg > 0) next_neg[e] += double(n_neg) * eps_neg[e];
        }
    }
    if (!Y.allFinite()) throw NumericalError("fit_umap: layout diverged to non-finite coordinates");

    Projection proj;
    proj.kind = ProjectionKind::umap;
    proj.in_dim = int(X.cols());
    proj.out_dim = p.out_dim;
    proj.umap.params = p;
    proj.umap.a = a;
    proj.umap.b = b;
    proj.umap.reference = X;
    proj.umap.embedding = std::move(Y);
    return proj;
}

const Matrix& training_embedding(const Projection& proj) {
    if (proj.kind != ProjectionKind::umap) throw ValidationError("training_embedding: not a UMAP projection");
    return proj.umap.embedding;
}

Matrix transform(const Projection& proj, const Matrix& X) {
    if (X.cols() != proj.in_dim)
        throw DimensionError("transform: input has " + std::to_string(X.cols()) + " columns, projection expects " +
                             std::to_string(proj.in_dim));
    if (proj.kind == ProjectionKind::pca) {
        return (X.rowwise() - proj.pca.mean.transpose()) * proj.pca.components.transpose();
    }

    const auto& st = proj.umap;
    const auto& p = st.params;
    const Matrix& ref = st.reference;
    const Matrix& emb = st.embedding;
    const int k = std::min<int>(p.n_neighbors, int(ref.rows()));
    Knn knn = exact_knn(ref, X, k);
    const int dim = proj.out_dim;
    Matrix out(X.rows(), dim);
    std::vector<double> diff(static_cast<std::size_t>(dim));
    for (Eigen::Index q = 0; q < X.rows(); ++q) {
        const auto& idx = knn.index[std::size_t(q)];
        const auto& dst = knn.dist[std::size_t(q)];
        auto [rho, sigma] = smooth_knn(dst, k);
        std::vector<double> w(static_cast<std::size_t>(k));
        double wsum = 0.0, wmax = 0.0;
        for (int t = 0; t < k; ++t) {
            w[std::size_t(t)] = std::exp(-std::max(0.0, dst[std::size_t(t)] - rho) / sigma);
            wsum += w[std::size_t(t)];
            wmax = std::max(wmax, w[std::size_t(t)]);
        }
        RowVector y = RowVector::Zero(dim);
        for (int t = 0; t < k; ++t) y += w[std::size_t(t)] * emb.row(idx[std::size_t(t)]);
        y /= wsum;

        // Each step follows the membership-weighted mean gradient over the point's edges.
        std::mt19937_64 rng(p.seed ^ (0x9E3779B97F4A7C15ULL * std::uint64_t(q + 1)));
        RowVector g(dim);
        for (int step = 0; step < p.transform_steps; ++step) {
            const double alpha = p.learning_rate * (1.0 - double(step) / double(p.transform_steps));
            g.setZero();
            for (int t = 0; t < k; ++t) {
                const double scale = w[std::size_t(t)] / wsum;
                const RowVector& o = emb.row(idx[std::size_t(t)]);
                double d2 = (y - o).squaredNorm();
                double coef = d2 > 0.0 ? (-2.0 * st.a * st.b * std::pow(d2, st.b - 1.0)) / (st.a * std::pow(d2, st.b) + 1.0) : 0.0;
                for (int c = 0; c < dim; ++c) g(c) += scale * clip4(coef * (y(c) - o(c)));
                for (int s = 0; s < p.negative_sample_rate; ++s) {
                    const auto r = Eigen::Index(rng() % std::uint64_t(ref.rows()));
                    const RowVector& on = emb.row(r);
                    double nd2 = (y - on).squaredNorm();
                    if (nd2 <= 0.0) continue;
                    double rc = (2.0 * st.b) / ((0.001 + nd2) * (st.a * std::pow(nd2, st.b) + 1.0));
                    for (int c = 0; c < dim; ++c) g(c) += scale * clip4(rc * (y(c) - on(c))) / p.negative_sample_rate;
                }
            }
            y += alpha * g;
        }
        out.row(q) = y;
    }
    return out;
}

}  // namespace episignal::dimred
