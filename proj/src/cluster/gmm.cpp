#include "episignal/cluster.hpp"
#include "episignal/core/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace episignal::cluster {

std::vector<int> euclidean_kmeans_labels(const Matrix& X, int k, std::uint64_t seed, int max_iter);

namespace {

struct Mixture {
    Matrix mean;  // k x d
    Matrix var;   // k x d
    Vector weight;
};

}  // namespace

ClusterModel gmm_fit(const Matrix& X, int k, std::uint64_t seed, int max_iter, double tol) {
    const Eigen::Index n = X.rows(), d = X.cols();
    if (k < 1) throw ValidationError("gmm_fit: k must be >= 1");
    if (n <= k) throw ValidationError("gmm_fit: need more points than components");
    if (!X.allFinite()) throw ValidationError("gmm_fit: input contains non-finite values");

    RowVector gmean = X.colwise().mean();
    RowVector gvar = (X.rowwise() - gmean).array().square().colwise().mean().matrix();
    RowVector floor = (gvar.array() * 1e-6).max(1e-12).matrix();

    Matrix resp = Matrix::Zero(n, k);
    {
        auto init = euclidean_kmeans_labels(X, k, seed, 100);
        for (Eigen::Index i = 0; i < n; ++i) resp(i, init[std::size_t(i)]) = 1.0;
    }

    Mixture mx{Matrix(k, d), Matrix(k, d), Vector(k)};
    std::vector<char> reseeded(std::size_t(k), 0);
    auto m_step = [&]() {
        Vector nk = resp.colwise().sum().transpose();
        for (int c = 0; c < k; ++c) {
            if (nk(c) < 1.0) {
                if (reseeded[std::size_t(c)])
                    throw NumericalError("gmm_fit: component " + std::to_string(c) +
                                         " collapsed again after re-seeding (k=" + std::to_string(k) + ")");
                reseeded[std::size_t(c)] = 1;
                // Farthest point from every current mean.
                Eigen::Index far = 0;
                double far_d = -1.0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    double dmin = std::numeric_limits<double>::infinity();
                    for (int o = 0; o < k; ++o)
                        if (o != c && nk(o) >= 1.0) dmin = std::min(dmin, (X.row(i) - mx.mean.row(o)).squaredNorm());
                    if (dmin > far_d) {
                        far_d = dmin;
                        far = i;
                    }
                }
                mx.mean.row(c) = X.row(far);
                mx.var.row(c) = gvar.cwiseMax(floor);
                mx.weight(c) = 1.0 / double(k);
                continue;
            }
            RowVector mu = (resp.col(c).transpose() * X) / nk(c);
            RowVector v = (resp.col(c).transpose() * (X.rowwise() - mu).array().square().matrix()) / nk(c);
            mx.mean.row(c) = mu;
            mx.var.row(c) = v.cwiseMax(floor);
            mx.weight(c) = nk(c) / double(n);
        }
        mx.weight /= mx.weight.sum();
    };

    const double log2pi = std::log(2.0 * std::numbers::pi);
    auto e_step = [&]() {
        double ll = 0.0;
        Matrix logp(n, k);
        for (int c = 0; c < k; ++c) {
            double base = std::log(mx.weight(c)) - 0.5 * (double(d) * log2pi + mx.var.row(c).array().log().sum());
            RowVector inv = mx.var.row(c).cwiseInverse();
            for (Eigen::Index i = 0; i < n; ++i)
                logp(i, c) = base - 0.5 * ((X.row(i) - mx.mean.row(c)).array().square() * inv.array()).sum();
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            double m = logp.row(i).maxCoeff();
            double s = (logp.row(i).array() - m).exp().sum();
            double lse = m + std::log(s);
            ll += lse;
            resp.row(i) = (logp.row(i).array() - lse).exp().matrix();
        }
        return ll / double(n);
    };

    ClusterModel model;
    model.algorithm = Algorithm::gmm;
    model.k = k;
    model.seed = seed;
    m_step();
    for (int it = 0; it < max_iter; ++it) {
        double ll = e_step();
        if (!std::isfinite(ll)) throw NumericalError("gmm_fit: non-finite log-likelihood at iteration " + std::to_string(it));
        model.trace.push_back(ll);
        model.iterations = it + 1;
        if (it > 0 && std::fabs(ll - model.trace[model.trace.size() - 2]) < tol) break;
        m_step();
    }

    model.labels.resize(std::size_t(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index best;
        resp.row(i).maxCoeff(&best);
        model.labels[std::size_t(i)] = int(best);
    }
    for (int c = 0; c < k; ++c) model.clusters.push_back({c, 0, 0.0, 0.0});
    for (int lab : model.labels) ++model.clusters[std::size_t(lab)].size;
    return model;
}

}  // namespace episignal::cluster
