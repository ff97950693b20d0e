#pragma once

#include "episignal/cluster.hpp"
#include "episignal/core/date.hpp"
#include "episignal/core/error.hpp"
#include "episignal/dimred.hpp"
#include "episignal/forecast.hpp"
#include "episignal/ingest.hpp"
#include "episignal/stats.hpp"
#include "episignal/threshold.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace episignal::report {

// Synthetic corpus ---------------------------------------------------------------

struct SynthConfig {
    std::uint64_t seed = 0;
    std::string region = "WA";
    Date start = Date{std::chrono::year{2020} / 3 / 7};
    int n_days = 360;
    int dim = 50;
    int n_clusters = 12;
    int lead = 7;
    double snr = 5.0;
    double noise_fraction = 0.15;  ///< share of posts drawn uniformly instead of from a blob
    double blob_sd = 1.0;
    double center_sd = 1.0;
    int n_waves = 5;
    double baseline_cases = 200.0;
    double case_noise = 0.05;  ///< multiplicative observation noise on daily cases
    double volume = 1.0;       ///< scales every blob's daily post rate

    void validate() const;
};

struct SynthManifest {
    SynthConfig config;
    int signal_blob = 0;
    int echo_blob = 1;
    std::vector<std::vector<std::string>> vocab;  ///< planted words per blob
    std::vector<int> post_blob;                   ///< per post; -1 for uniform noise posts
    std::vector<double> clean_cases;              ///< noise-free daily cases
};

struct SynthData {
    std::vector<ingest::PostRecord> posts;
    ingest::EmbeddingMatrix embeddings;
    ingest::DailySeries caseload;
    std::vector<ingest::DailySeries> mobility;
    std::vector<ingest::DailySeries> gov_response;
    SynthManifest manifest;
};

SynthData synth_generate(const SynthConfig& cfg);

/// posts.jsonl, embeddings.jsonl, caseload.csv, mobility_<name>.csv, gov_<name>.csv, manifest.json
void write_synth(const SynthData& data, const std::filesystem::path& dir);

// Cluster labels -------------------------------------------------------------------

struct ClusterLabel {
    int id = 0;
    int frequency = 0;
    std::vector<std::string> top_words;
};

const std::vector<std::string>& default_stopwords();

std::vector<ClusterLabel> label_clusters(const cluster::ClusterModel& model,
                                         const std::vector<ingest::PostRecord>& posts,
                                         const std::vector<std::string>& stopwords = default_stopwords(),
                                         std::size_t top = 5);

/// Fixed lexicon for keyword-count features.
const std::vector<std::string>& default_keywords();

// Configuration ----------------------------------------------------------------------

struct InputPaths {
    std::filesystem::path posts;
    std::filesystem::path embeddings;
    std::filesystem::path caseload;
    std::vector<std::filesystem::path> mobility;
    std::vector<std::filesystem::path> gov_response;
};

struct PipelineConfig {
    std::vector<std::string> regions{"WA"};
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "out";
    std::filesystem::path source;  ///< config file path, if loaded from one

    bool synthetic = true;
    SynthConfig synth;
    InputPaths inputs;  ///< "{region}" in a path is replaced by the region tag

    DateRange threshold_range{Date{std::chrono::year{2020} / 3 / 7}, Date{std::chrono::year{2021} / 1 / 17}};
    Date forecast_train_start = Date{std::chrono::year{2020} / 3 / 7};
    Date forecast_train_end = Date{std::chrono::year{2020} / 12 / 31};
    DateRange forecast_test{Date{std::chrono::year{2021} / 1 / 1}, Date{std::chrono::year{2021} / 3 / 1}};

    std::string reduction = "umap";  ///< umap | pca
    dimred::UmapParams umap;
    cluster::HdbscanParams hdbscan;
    int embed_dim = 0;  ///< expected D; 0 accepts whatever the embeddings carry

    threshold::ForestParams forest;
    std::vector<int> taus{7, 14, 21, 28};
    std::vector<double> ms{0.2, 0.4, 0.6, 0.8, 1.0};
    bool smooth_features = false;
    threshold::SplitMode split = threshold::SplitMode::random;
    std::size_t top_features = 25;
    std::vector<std::string> feature_sets{"T_RoB++", "T_BoW++", "T_RoB", "T_BoW", "T_KW", "M", "G", "P", "C"};

    std::vector<int> horizons{7, 14, 21};
    std::vector<std::string> forecast_models{"martingale", "gp", "transformer"};
    std::vector<std::string> covariate_sets{"uni", "+T_RoB", "+M", "+G", "+T_RoB+M", "+T_RoB+G", "+M+G", "+T_RoB+M+G"};
    forecast::GpParams gp;
    forecast::TransformerParams transformer;
    int n_draws = 500;

    std::size_t error_samples = 10000;
    stats::ZMode z_mode = stats::ZMode::summed_variance;
    bool signed_errors = false;

    bool figure_coords = true;  ///< 2-D layout CSV for the cluster scatter
    std::vector<int> grid_ks{25, 50, 75, 100, 125, 150};
    std::vector<int> grid_taus{7, 14, 21, 28};

    void validate() const;
};

/// INI-style file: `key = value` lines grouped under `[section]` headers.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
/// Canonical key=value rendering; its SHA-256 is the config hash.
std::string canonical_config(const PipelineConfig& cfg);
std::string config_hash(const PipelineConfig& cfg);

// Cache --------------------------------------------------------------------------------

std::string sha256_hex(const std::string& data);
std::string sha256_file(const std::filesystem::path& path);

class StageCache {
public:
    explicit StageCache(std::filesystem::path dir);
    std::optional<std::string> get(const std::string& stage, const std::string& key) const;
    void put(const std::string& stage, const std::string& key, const std::string& payload) const;
    std::filesystem::path path_for(const std::string& stage, const std::string& key) const;

    mutable int hits = 0;
    mutable int misses = 0;

private:
    std::filesystem::path dir_;
};

/// Writes via a temporary file in the same directory, then renames.
void atomic_write(const std::filesystem::path& path, const std::string& content);

// Pipeline ------------------------------------------------------------------------------

enum class Stage { ingest, reduce, cluster, features, threshold, forecast, report };

const char* stage_name(Stage s);
Stage parse_stage(const std::string& s);

struct StageError : Error {
    StageError(Stage s, const std::string& cause);
    Stage stage;
};

struct PipelineResult {
    std::vector<std::filesystem::path> artifacts;
    std::map<std::string, std::string> cache_status;  ///< "<region>/<stage>" -> hit | miss
};

/// Runs every stage up to and including `until`, writing artifacts under cfg.out_dir.
PipelineResult run_pipeline(const PipelineConfig& cfg, Stage until = Stage::report);

// Reduction x clustering grid -------------------------------------------------------------------------

struct GridRow {
    std::string reduction;
    std::string clustering;
    int k = 0;  ///< 0 for hdbscan
    int horizon = 0;
    double accuracy = 0.0;  ///< mean over the threshold grid
    int n_clusters = 0;
};

struct SilhouettePoint {
    std::string reduction;
    std::string clustering;
    int k = 0;
    double score = 0.0;
};

struct GridResult {
    std::vector<GridRow> rows;
    std::vector<SilhouettePoint> silhouette;
};

struct GridInput {
    std::vector<ingest::PostRecord> posts;
    Matrix embeddings;
    ingest::DailySeries caseload;  ///< raw daily cases
};

struct GridOptions {
    std::vector<std::string> reductions{"pca", "umap"};
    std::vector<std::string> clusterings{"hdbscan", "km", "gmm"};
    std::vector<int> ks{25, 50, 75, 100, 125, 150};
    std::vector<int> taus{7, 14, 21, 28};
    std::vector<double> ms{0.2, 0.4, 0.6, 0.8, 1.0};
    bool silhouette = true;
    std::size_t silhouette_sample = 2000;
};

/// Runs {reduction} x {clustering} through the threshold task using cluster counts only.
GridResult appendix_grid(const PipelineConfig& cfg, const GridInput& in, const GridOptions& opt);

/// Mean accuracy of cluster-count features over the (tau, m) grid for fixed labels.
double threshold_accuracy(const PipelineConfig& cfg, const std::vector<ingest::PostRecord>& posts,
                          const std::vector<int>& labels, const ingest::DailySeries& caseload, int tau,
                          const std::vector<double>& ms);

void write_grid(const GridResult& g, const std::filesystem::path& dir, const std::string& hash, std::uint64_t seed);

}  // namespace episignal::report
