#include "episignal/core/csv.hpp"
#include "episignal/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace episignal::report {

namespace {

// Accuracy for one (tau, m) cell, or nullopt when the labels cannot support a split.
std::optional<double> cell_accuracy(const PipelineConfig& cfg, const features::FeatureTable& table,
                                    const ingest::DailySeries& mu, int tau, double m) {
    auto labeling = threshold::label_days(mu, {tau, m});
    std::erase_if(labeling.days, [&](const threshold::DayLabel& d) { return !cfg.threshold_range.contains(d.day); });
    const auto rows = threshold::make_rows(table, labeling);
    threshold::ThresholdDataset ds;
    try {
        ds = threshold::balance_and_split(rows, cfg.seed, 0.25, cfg.split);
    } catch (const Error&) {
        return std::nullopt;
    }
    const auto train = ds.indices(false);
    if (train.size() < 10 || ds.indices(true).empty()) return std::nullopt;

    const auto sel = features::chi2_select(ds.rows_of(train), ds.names, ds.labels_of(train), cfg.top_features);
    threshold::ThresholdDataset picked = ds;
    picked.names = sel.names();
    picked.X.resize(ds.X.rows(), Eigen::Index(picked.names.size()));
    for (std::size_t k = 0; k < picked.names.size(); ++k) {
        const auto it = std::find(ds.names.begin(), ds.names.end(), picked.names[k]);
        picked.X.col(Eigen::Index(k)) = ds.X.col(it - ds.names.begin());
    }
    auto model = threshold::train_forest(picked, cfg.forest);
    return threshold::evaluate(model, picked);
}

double mean_accuracy(const PipelineConfig& cfg, const features::FeatureTable& table, const ingest::DailySeries& mu,
                     int tau, const std::vector<double>& ms) {
    double sum = 0.0;
    int n = 0;
    for (double m : ms)
        if (auto a = cell_accuracy(cfg, table, mu, tau, m)) {
            sum += *a;
            ++n;
        }
    return n ? sum / n : std::nan("");
}

std::vector<int> sample_rows(Eigen::Index n, std::size_t cap, std::uint64_t seed) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    if (idx.size() <= cap) return idx;
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

double threshold_accuracy(const PipelineConfig& cfg, const std::vector<ingest::PostRecord>& posts,
                          const std::vector<int>& labels, const ingest::DailySeries& caseload, int tau,
                          const std::vector<double>& ms) {
    const auto table = features::daily_cluster_counts(posts, labels, cfg.threshold_range);
    return mean_accuracy(cfg, table, features::moving_average(caseload, 7), tau, ms);
}

GridResult appendix_grid(const PipelineConfig& cfg, const GridInput& in, const GridOptions& opt) {
    if (std::size_t(in.embeddings.rows()) != in.posts.size())
        throw DimensionError("grid: embeddings and posts differ in length");
    GridResult out;
    const auto mu = features::moving_average(in.caseload, 7);
    const auto sample = sample_rows(in.embeddings.rows(), opt.silhouette_sample, cfg.seed);

    for (const auto& red : opt.reductions) {
        Matrix Y;
        if (red == "pca") {
            Y = dimred::transform(dimred::fit_pca(in.embeddings, cfg.umap.out_dim), in.embeddings);
        } else if (red == "umap") {
            Y = dimred::training_embedding(dimred::fit_umap(in.embeddings, cfg.umap));
        } else {
            throw ValidationError("grid: unknown reduction '" + red + "'");
        }
        Matrix Ys(Eigen::Index(sample.size()), Y.cols());
        for (std::size_t i = 0; i < sample.size(); ++i) Ys.row(Eigen::Index(i)) = Y.row(sample[i]);

        auto score = [&](const std::string& alg, int k, const cluster::ClusterModel& model) {
            const auto table = features::daily_cluster_counts(in.posts, model.labels, cfg.threshold_range);
            for (int tau : opt.taus)
                out.rows.push_back({red, alg, k, tau, mean_accuracy(cfg, table, mu, tau, opt.ms), model.n_clusters()});
            if (!opt.silhouette) return;
            std::vector<int> lab(sample.size());
            for (std::size_t i = 0; i < sample.size(); ++i) lab[i] = model.labels[std::size_t(sample[i])];
            double s = std::nan("");
            try {
                s = cluster::silhouette(Ys, lab);
            } catch (const Error&) {
            }
            out.silhouette.push_back({red, alg, k, s});
        };

        for (const auto& alg : opt.clusterings) {
            if (alg == "hdbscan") {
                score(alg, 0, cluster::fit_hdbscan(Y, cfg.hdbscan));
            } else if (alg == "km") {
                for (int k : opt.ks) score(alg, k, cluster::spherical_kmeans(Y, k, cfg.seed));
            } else if (alg == "gmm") {
                for (int k : opt.ks) {
                    cluster::ClusterModel model;
                    try {
                        model = cluster::gmm_fit(Y, k, cfg.seed);
                    } catch (const NumericalError&) {
                        // A fit that collapses twice is reported as an empty cell.
                        for (int tau : opt.taus) out.rows.push_back({red, alg, k, tau, std::nan(""), 0});
                        if (opt.silhouette) out.silhouette.push_back({red, alg, k, std::nan("")});
                        continue;
                    }
                    score(alg, k, model);
                }
            } else {
                throw ValidationError("grid: unknown clustering '" + alg + "'");
            }
        }
    }
    return out;
}

void write_grid(const GridResult& g, const std::filesystem::path& dir, const std::string& hash, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    const std::string s = std::to_string(seed);
    std::ostringstream rows;
    csv::write_row(rows, {"config_hash", "seed", "reduction", "clustering", "k", "tau", "accuracy", "n_clusters"});
    for (const auto& r : g.rows)
        csv::write_row(rows, {hash, s, r.reduction, r.clustering, std::to_string(r.k), std::to_string(r.horizon),
                              std::isnan(r.accuracy) ? "" : csv::format_double(r.accuracy), std::to_string(r.n_clusters)});
    atomic_write(dir / "appendix_grid.csv", rows.str());

    std::ostringstream sil;
    csv::write_row(sil, {"config_hash", "seed", "reduction", "clustering", "k", "silhouette"});
    for (const auto& p : g.silhouette)
        csv::write_row(sil, {hash, s, p.reduction, p.clustering, std::to_string(p.k),
                             std::isnan(p.score) ? "" : csv::format_double(p.score)});
    atomic_write(dir / "silhouette.csv", sil.str());
}

}  // namespace episignal::report
