#pragma once

#include "episignal/core/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

namespace episignal::cluster {

enum class Algorithm { hdbscan, km, gmm };

const char* algorithm_name(Algorithm a);

struct MstEdge {
    int a = 0;
    int b = 0;
    double weight = 0.0;  // mutual-reachability distance
};

// One cluster of the condensed hierarchy. `points` lists only the points that leave
// this node directly, with the lambda at which they do.
struct CondensedNode {
    int id = 0;
    std::optional<int> parent;
    double lambda_birth = 0.0;
    double lambda_death = 0.0;
    int size = 0;
    std::vector<std::pair<int, double>> points;
    std::vector<int> children;
    double stability = 0.0;
    bool selected = false;
};

struct ClusterInfo {
    int id = 0;
    int size = 0;
    double stability = 0.0;
    double lambda_birth = 0.0;  // hdbscan only
};

struct HdbscanParams {
    int min_cluster_size = 25;
    int min_samples = 0;  ///< 0 means "same as min_cluster_size"
    bool allow_single_cluster = true;

    int effective_min_samples() const { return min_samples > 0 ? min_samples : min_cluster_size; }
};

struct ClusterModel {
    Algorithm algorithm = Algorithm::hdbscan;
    std::vector<int> labels;
    std::vector<ClusterInfo> clusters;

    HdbscanParams hdbscan;
    int k = 0;
    std::uint64_t seed = 0;

    // hdbscan state
    Matrix reference;
    std::vector<double> core;
    std::vector<MstEdge> mst;
    std::vector<CondensedNode> tree;

    /// EM log-likelihood per iteration (gmm), or per-iteration objective (km).
    std::vector<double> trace;
    int iterations = 0;

    int n_clusters() const { return int(clusters.size()); }
    int noise_count() const;
    const ClusterInfo* find(int id) const;
};

/// Distance from each point to its min_samples-th nearest neighbour, the point itself excluded.
std::vector<double> core_distances(const Matrix& X, int min_samples);

/// Prim's algorithm over the complete mutual-reachability graph. Edges come out sorted by
/// (weight, a, b).
std::vector<MstEdge> build_mst(const Matrix& X, const std::vector<double>& core);

/// Single-linkage dendrogram, condensed at min_cluster_size, excess-of-mass selection.
/// `n` is the number of points the edges span.
ClusterModel condense_and_extract(const std::vector<MstEdge>& mst, int n, const HdbscanParams& params);

ClusterModel fit_hdbscan(const Matrix& X, const HdbscanParams& params);

/// Out-of-sample labels via the nearest reference point's join density.
std::vector<int> assign_new(const ClusterModel& model, const Matrix& Y);

ClusterModel spherical_kmeans(const Matrix& X, int k, std::uint64_t seed, int max_iter = 300);

ClusterModel gmm_fit(const Matrix& X, int k, std::uint64_t seed, int max_iter = 200, double tol = 1e-6);

/// Mean silhouette over non-noise points. Singleton clusters contribute 0.
double silhouette(const Matrix& X, const std::vector<int>& labels);

/// JSON document plus `<path>.coords.bin` (uint32 n, uint32 k, then float32 row-major) when
/// reference coordinates are present.
void save_model(const ClusterModel& model, const std::filesystem::path& path);
ClusterModel load_model(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

}  // namespace episignal::cluster
