#pragma once

#include "episignal/core/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace episignal::dimred {

struct UmapParams {
    int n_neighbors = 15;
    double min_dist = 0.1;
    double spread = 1.0;
    int n_epochs = 200;
    int out_dim = 50;
    int negative_sample_rate = 5;
    double learning_rate = 1.0;
    std::uint64_t seed = 0;
    /// SGD steps used to refine out-of-sample points in transform().
    int transform_steps = 5;

    void validate() const;
};

enum class ProjectionKind { pca, umap };

struct PcaState {
    Vector mean;
    Matrix components;  // k x D, rows orthonormal
    Vector explained_variance;
    double total_variance = 0.0;
};

struct UmapState {
    UmapParams params;
    double a = 0.0;
    double b = 0.0;
    Matrix reference;         // n x D training points
    Matrix embedding;         // n x k training coordinates
};

struct Projection {
    ProjectionKind kind = ProjectionKind::pca;
    int in_dim = 0;
    int out_dim = 0;
    PcaState pca;
    UmapState umap;
};

/// Top-k principal axes of the sample covariance. Each component's largest-magnitude
/// entry is made positive.
Projection fit_pca(const Matrix& X, int k);

/// Fits the attraction curve 1/(1 + a d^(2b)) to the min_dist/spread target by least squares.
std::pair<double, double> fit_ab(double spread, double min_dist);

/// Exact k-NN fuzzy graph plus negative-sampling SGD layout.
Projection fit_umap(const Matrix& X, const UmapParams& p);

/// Fitted training coordinates (the SGD result) for a UMAP projection.
const Matrix& training_embedding(const Projection& proj);

Matrix transform(const Projection& proj, const Matrix& X);

/// 1 means every low-dimensional k-neighbourhood was also a high-dimensional one.
double trustworthiness(const Matrix& X, const Matrix& Y, int k);

// Exact k nearest neighbours (self excluded), ascending by (distance, index).
struct Knn {
    std::vector<std::vector<int>> index;
    std::vector<std::vector<double>> dist;
};
Knn exact_knn(const Matrix& X, int k);
/// Neighbours of each row of Q among the rows of X (no self exclusion).
Knn exact_knn(const Matrix& X, const Matrix& Q, int k);

/// Per-point (rho, sigma) so that sum_j exp(-max(0, d_j - rho)/sigma) = log2(k).
std::pair<double, double> smooth_knn(const std::vector<double>& dists, int k);

void save_projection(const Projection& proj, const std::filesystem::path& path);
Projection load_projection(const std::filesystem::path& path);

}  // namespace episignal::dimred
