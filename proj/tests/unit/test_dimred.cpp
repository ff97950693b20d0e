#include "episignal/cluster.hpp"
#include "episignal/core/error.hpp"
#include "episignal/dimred.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace episignal;
using namespace episignal::dimred;

namespace {

Matrix blobs(int per, int dim, int k, double sep, std::uint64_t seed, std::vector<int>* truth = nullptr) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix X(per * k, dim);
    for (int b = 0; b < k; ++b)
        for (int i = 0; i < per; ++i) {
            for (int c = 0; c < dim; ++c) X(b * per + i, c) = n(rng) + (c == b ? sep : 0.0);
            if (truth) truth->push_back(b);
        }
    return X;
}

}  // namespace

TEST_SUITE("dimred") {

TEST_CASE("pca: collinear points give a component along the line") {
    Matrix X(20, 3);
    const Eigen::RowVector3d dir = Eigen::RowVector3d(1, 2, -2).normalized();
    for (int i = 0; i < 20; ++i) X.row(i) = Eigen::RowVector3d(0.5, 1, 3) + (i - 7.3) * dir;
    auto p = fit_pca(X, 1);
    CHECK(std::fabs(p.pca.components.row(0).dot(dir)) > 1.0 - 1e-6);
}

TEST_CASE("pca: stretched 2-D Gaussian matches the closed-form eigensolver") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix X(500, 2);
    for (int i = 0; i < 500; ++i) {
        const double a = 10.0 * n(rng), b = n(rng);
        X(i, 0) = 0.8 * a - 0.6 * b;
        X(i, 1) = 0.6 * a + 0.8 * b;
    }
    const RowVector mean = X.colwise().mean();
    const Matrix C = (X.rowwise() - mean).transpose() * (X.rowwise() - mean) / double(X.rows() - 1);
    auto [l1, l2] = oracle::eig2x2(C(0, 0), C(0, 1), C(1, 1));
    auto p = fit_pca(X, 1);
    CHECK(std::fabs(p.pca.explained_variance(0) - l1) / l1 < 1e-8);
    CHECK(std::fabs(p.pca.total_variance - p.pca.explained_variance(0) - l2) / l1 < 1e-8);
}

TEST_CASE("pca: k out of range") {
    Matrix X = Matrix::Random(10, 4);
    CHECK_THROWS(fit_pca(X, 0));
    CHECK_THROWS(fit_pca(X, 4));
}

TEST_CASE("pca: orthonormal components, ordered variance, transform properties") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix X(60, 8);
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index c = 0; c < X.cols(); ++c) X(i, c) = n(rng) * (c + 1);
    auto p = fit_pca(X, 5);
    const Matrix G = p.pca.components * p.pca.components.transpose();
    CHECK((G - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-6);
    for (int k = 1; k < 5; ++k) CHECK(p.pca.explained_variance(k) <= p.pca.explained_variance(k - 1));
    for (int k = 0; k < 5; ++k) {
        Eigen::Index at = 0;
        p.pca.components.row(k).cwiseAbs().maxCoeff(&at);
        CHECK(p.pca.components(k, at) > 0.0);
    }

    const Matrix mean_row = p.pca.mean.transpose();
    CHECK(transform(p, mean_row).cwiseAbs().maxCoeff() < 1e-12);

    Matrix Q = X.topRows(5);
    const Matrix T = transform(p, Q);
    for (int i = 0; i < 5; ++i)
        for (int k = 0; k < 5; ++k) {
            double s = 0.0;
            for (int c = 0; c < 8; ++c) s += (Q(i, c) - p.pca.mean(c)) * p.pca.components(k, c);
            CHECK(std::fabs(T(i, k) - s) < 1e-10);
        }
    CHECK_THROWS_AS(transform(p, Matrix::Zero(2, 7)), DimensionError);
}

TEST_CASE("pca: full rank reconstructs losslessly") {
    Matrix X = Matrix::Random(30, 6);
    auto p = fit_pca(X.leftCols(6), 5);
    (void)p;
    // k must stay below D, so reconstruct a rank-5 set embedded in 6-D.
    Matrix B = Matrix::Random(30, 5);
    Matrix L = Matrix::Random(5, 6);
    Matrix Y = B * L;
    auto q = fit_pca(Y, 5);
    Matrix back = transform(q, Y) * q.pca.components;
    back.rowwise() += q.pca.mean.transpose();
    CHECK((back - Y).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("trustworthiness: identity map is 1, permutation matches brute force") {
    Matrix X = blobs(20, 6, 3, 5.0, 4);
    CHECK(trustworthiness(X, X, 5) == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<int> perm(static_cast<std::size_t>(X.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(1);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix Y(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) Y.row(i) = X.row(perm[std::size_t(i)]);
    CHECK(std::fabs(trustworthiness(X, Y, 5) - oracle::trustworthiness(X, Y, 5)) < 1e-9);
    CHECK_THROWS(trustworthiness(X, Y, int(X.rows())));
}

TEST_CASE("umap: blobs stay trustworthy, separated, finite and reproducible") {
    std::vector<int> truth;
    Matrix X = blobs(50, 20, 3, 8.0, 7, &truth);
    UmapParams p;
    p.out_dim = 2;
    p.seed = 3;
    auto a = fit_umap(X, p);
    const Matrix& Y = training_embedding(a);
    CHECK(Y.allFinite());
    CHECK(trustworthiness(X, Y, 10) >= 0.90);

    auto b = fit_umap(X, p);
    CHECK(training_embedding(b) == Y);

    Matrix centroids = Matrix::Zero(3, 2);
    for (int i = 0; i < 150; ++i) centroids.row(truth[std::size_t(i)]) += Y.row(i) / 50.0;
    double spread = 0.0;
    for (int i = 0; i < 150; ++i) spread += (Y.row(i) - centroids.row(truth[std::size_t(i)])).norm() / 150.0;
    double between = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j) between += (centroids.row(i) - centroids.row(j)).norm() / 3.0;
    CHECK(between > spread);

    // Re-projecting training points lands within their blob's radius of the fitted coordinate.
    std::vector<double> radius(3, 0.0);
    for (int j = 0; j < 150; ++j) {
        const int b = truth[std::size_t(j)];
        radius[std::size_t(b)] = std::max(radius[std::size_t(b)], (Y.row(j) - centroids.row(b)).norm());
    }
    const Matrix t = transform(a, X);
    for (int i = 0; i < 150; i += 7) CHECK((t.row(i) - Y.row(i)).norm() <= radius[std::size_t(truth[std::size_t(i)])]);
}

TEST_CASE("umap: finite output across seeds") {
    Matrix X = blobs(30, 10, 3, 6.0, 1);
    UmapParams p;
    p.out_dim = 2;
    p.n_epochs = 60;
    for (std::uint64_t s = 0; s < 10; ++s) {
        p.seed = s;
        CHECK(training_embedding(fit_umap(X, p)).allFinite());
    }
}

TEST_CASE("umap: too few points and bad params") {
    Matrix X = Matrix::Random(10, 5);
    UmapParams p;
    p.out_dim = 2;
    CHECK_THROWS(fit_umap(X, p));
    p.n_neighbors = 1;
    CHECK_THROWS(p.validate());
    p.n_neighbors = 15;
    p.min_dist = 1.0;
    CHECK_THROWS(p.validate());
}

TEST_CASE("umap: bandwidth solves the membership equation") {
    std::vector<double> d{0.5, 0.7, 0.9, 1.4, 2.0, 2.1, 3.5};
    auto [rho, sigma] = smooth_knn(d, 7);
    double s = 0.0;
    for (double x : d) s += std::exp(-std::max(0.0, x - rho) / sigma);
    CHECK(rho == doctest::Approx(0.5));
    CHECK(s == doctest::Approx(std::log2(7.0)).epsilon(1e-5));
}

TEST_CASE("umap: transform keeps cluster assignments on the blob fixture") {
    Matrix X = blobs(40, 12, 3, 8.0, 21);
    UmapParams p;
    p.out_dim = 2;
    p.seed = 5;
    auto proj = fit_umap(X, p);
    cluster::HdbscanParams hp;
    hp.min_cluster_size = 15;
    auto model = cluster::fit_hdbscan(training_embedding(proj), hp);
    auto again = cluster::assign_new(model, transform(proj, X));
    int same = 0;
    for (std::size_t i = 0; i < again.size(); ++i) same += again[i] == model.labels[i];
    CHECK(double(same) / double(again.size()) >= 0.95);
}

TEST_CASE("projection save and load round-trip") {
    Matrix X = blobs(20, 6, 2, 5.0, 3);
    auto p = fit_pca(X, 2);
    const auto path = std::filesystem::temp_directory_path() / "episignal_pca.json";
    save_projection(p, path);
    auto q = load_projection(path);
    CHECK((transform(q, X) - transform(p, X)).cwiseAbs().maxCoeff() < 1e-12);
    std::filesystem::remove(path);
}

}  // TEST_SUITE
