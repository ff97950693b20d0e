#include "episignal/cluster.hpp"
#include "episignal/core/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace episignal::cluster {

namespace {

Matrix normalize_rows(const Matrix& X) {
    Matrix out = X;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double nrm = X.row(i).norm();
        if (!(nrm > 0.0) || !std::isfinite(nrm))
            throw ValidationError("spherical_kmeans: row " + std::to_string(i) + " has zero or non-finite norm");
        out.row(i) /= nrm;
    }
    return out;
}

// k-means++ seeding under a caller-supplied distance.
template <class Dist>
std::vector<int> plus_plus(Eigen::Index n, int k, std::mt19937_64& rng, Dist dist) {
    std::vector<int> centers;
    std::vector<char> used(static_cast<std::size_t>(n), 0);
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    centers.push_back(int(first(rng)));
    used[std::size_t(centers[0])] = 1;
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        double d = dist(i, centers[0]);
        d2[std::size_t(i)] = d * d;
    }
    while (int(centers.size()) < k) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            if (!used[std::size_t(i)]) total += d2[std::size_t(i)];
        int pick = -1;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng), acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (used[std::size_t(i)]) continue;
                acc += d2[std::size_t(i)];
                pick = int(i);
                if (acc >= target) break;
            }
        } else {
            for (Eigen::Index i = 0; i < n && pick < 0; ++i)
                if (!used[std::size_t(i)]) pick = int(i);
        }
        centers.push_back(pick);
        used[std::size_t(pick)] = 1;
        for (Eigen::Index i = 0; i < n; ++i) {
            double d = dist(i, pick);
            d2[std::size_t(i)] = std::min(d2[std::size_t(i)], d * d);
        }
    }
    return centers;
}

}  // namespace

ClusterModel spherical_kmeans(const Matrix& X, int k, std::uint64_t seed, int max_iter) {
    const Eigen::Index n = X.rows();
    if (k < 1) throw ValidationError("spherical_kmeans: k must be >= 1");
    if (n < k) throw ValidationError("spherical_kmeans: fewer points than clusters");
    Matrix U = normalize_rows(X);

    std::mt19937_64 rng(seed);
    auto cosdist = [&](Eigen::Index i, int c) { return std::max(0.0, 1.0 - U.row(i).dot(U.row(c))); };
    std::vector<int> seeds = plus_plus(n, k, rng, cosdist);
    Matrix C(k, X.cols());
    for (int c = 0; c < k; ++c) C.row(c) = U.row(seeds[std::size_t(c)]);

    ClusterModel model;
    model.algorithm = Algorithm::km;
    model.k = k;
    model.seed = seed;
    model.labels.assign(std::size_t(n), -1);
    std::vector<double> sim(static_cast<std::size_t>(n));
    for (int it = 0; it < max_iter; ++it) {
        Eigen::MatrixXd S = U * C.transpose();
        bool changed = false;
        double objective = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index best;
            sim[std::size_t(i)] = S.row(i).maxCoeff(&best);
            objective += 1.0 - sim[std::size_t(i)];
            if (model.labels[std::size_t(i)] != int(best)) {
                model.labels[std::size_t(i)] = int(best);
                changed = true;
            }
        }
        model.trace.push_back(objective);
        model.iterations = it + 1;
        if (!changed && it > 0) break;

        Matrix sums = Matrix::Zero(k, X.cols());
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(model.labels[std::size_t(i)]) += U.row(i);
            ++counts[std::size_t(model.labels[std::size_t(i)])];
        }
        std::vector<char> taken(static_cast<std::size_t>(n), 0);
        for (int c = 0; c < k; ++c) {
            double nrm = sums.row(c).norm();
            if (counts[std::size_t(c)] > 0 && nrm > 1e-12) {
                C.row(c) = sums.row(c) / nrm;
                continue;
            }
            // Empty or degenerate: move to the worst-fitting point not already used.
            Eigen::Index worst = -1;
            for (Eigen::Index i = 0; i < n; ++i)
                if (!taken[std::size_t(i)] && (worst < 0 || sim[std::size_t(i)] < sim[std::size_t(worst)])) worst = i;
            taken[std::size_t(worst)] = 1;
            C.row(c) = U.row(worst);
            model.labels[std::size_t(worst)] = -1;  // forces another assignment pass
        }
    }
    for (int c = 0; c < k; ++c) model.clusters.push_back({c, 0, 0.0, 0.0});
    for (int lab : model.labels) ++model.clusters[std::size_t(lab)].size;
    return model;
}

// Plain Euclidean Lloyd used to seed the mixture.
std::vector<int> euclidean_kmeans_labels(const Matrix& X, int k, std::uint64_t seed, int max_iter) {
    const Eigen::Index n = X.rows();
    std::mt19937_64 rng(seed);
    auto dist = [&](Eigen::Index i, int c) { return (X.row(i) - X.row(c)).norm(); };
    std::vector<int> seeds = plus_plus(n, k, rng, dist);
    Matrix C(k, X.cols());
    for (int c = 0; c < k; ++c) C.row(c) = X.row(seeds[std::size_t(c)]);
    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    for (int it = 0; it < max_iter; ++it) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index best;
            (C.rowwise() - X.row(i)).rowwise().squaredNorm().minCoeff(&best);
            if (labels[std::size_t(i)] != int(best)) {
                labels[std::size_t(i)] = int(best);
                changed = true;
            }
        }
        if (!changed) break;
        Matrix sums = Matrix::Zero(k, X.cols());
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(labels[std::size_t(i)]) += X.row(i);
            ++counts[std::size_t(labels[std::size_t(i)])];
        }
        for (int c = 0; c < k; ++c)
            if (counts[std::size_t(c)] > 0) C.row(c) = sums.row(c) / double(counts[std::size_t(c)]);
    }
    return labels;
}

}  // namespace episignal::cluster
