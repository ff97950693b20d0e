#include "episignal/core/csv.hpp"
#include "episignal/report.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace episignal::report {

using nlohmann::json;

namespace {

constexpr std::array<Stage, 7> kStages{Stage::ingest,    Stage::reduce,   Stage::cluster, Stage::features,
                                       Stage::threshold, Stage::forecast, Stage::report};

std::string digest(std::initializer_list<std::string> parts) {
    std::string all;
    for (const auto& p : parts) {
        all += std::to_string(p.size());
        all += ':';
        all += p;
        all += '\n';
    }
    return sha256_hex(all);
}

std::string fmt(double v) { return csv::format_double(v); }

std::string encode_matrix(const Matrix& m) {
    std::string out(16 + sizeof(double) * std::size_t(m.size()), '\0');
    const std::uint64_t r = std::uint64_t(m.rows());
    const std::uint64_t c = std::uint64_t(m.cols());
    std::memcpy(out.data(), &r, 8);
    std::memcpy(out.data() + 8, &c, 8);
    if (m.size() > 0) std::memcpy(out.data() + 16, m.data(), sizeof(double) * std::size_t(m.size()));
    return out;
}

Matrix decode_matrix(const std::string& s) {
    if (s.size() < 16) throw Error("cache: truncated matrix");
    std::uint64_t r = 0;
    std::uint64_t c = 0;
    std::memcpy(&r, s.data(), 8);
    std::memcpy(&c, s.data() + 8, 8);
    if (s.size() != 16 + sizeof(double) * r * c) throw Error("cache: matrix size mismatch");
    Matrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    if (m.size() > 0) std::memcpy(m.data(), s.data() + 16, sizeof(double) * std::size_t(m.size()));
    return m;
}

std::string table_csv(const features::FeatureTable& t) {
    std::ostringstream o;
    features::write_csv(o, t);
    return o.str();
}

features::FeatureTable csv_table(const std::string& s, const std::string& region) {
    std::istringstream in(s);
    return features::read_csv(in, region);
}

std::filesystem::path for_region(const std::filesystem::path& p, const std::string& region) {
    std::string s = p.string();
    const std::string tag = "{region}";
    for (auto pos = s.find(tag); pos != std::string::npos; pos = s.find(tag)) s.replace(pos, tag.size(), region);
    return s;
}

struct RegionData {
    std::vector<ingest::PostRecord> posts;
    Matrix embeddings;
    ingest::DailySeries caseload;
    std::vector<ingest::DailySeries> mobility;
    std::vector<ingest::DailySeries> gov;
};

struct ClusterResult {
    std::vector<int> labels;
    std::vector<cluster::ClusterInfo> clusters;
};

struct ThresholdCell {
    std::string set;
    int tau = 0;
    double m = 0.0;
    std::string status = "ok";
    double accuracy = 0.0;
    int n_train = 0;
    int n_test = 0;
    int positives = 0;
    std::map<std::string, double> groups;
};

struct RunSummary {
    forecast::ForecastRun run;  ///< points keep only mean and actual
    std::vector<double> sd;     ///< per point spread of the draws
    stats::Moments errors;
};

class Runner {
public:
    Runner(const PipelineConfig& cfg, Stage until)
        : cfg_(cfg), until_(until), cache_(cfg.out_dir / "cache"), hash_(config_hash(cfg)) {}

    PipelineResult run() {
        std::filesystem::create_directories(cfg_.out_dir);
        std::vector<RegionState> states(cfg_.regions.size());
        for (std::size_t ri = 0; ri < states.size(); ++ri) {
            states[ri].name = cfg_.regions[ri];
            guarded(Stage::ingest, [&] { ingest(states[ri], ri); });
            auto& counts = regions_posts_[states[ri].name];
            for (const auto& p : states[ri].data.posts)
                for (const auto& t : p.tokens) ++counts[t];
        }
        for (auto& r : states) region(r);
        if (until_ == Stage::report) guarded(Stage::report, [&] { report(); });
        return std::move(result_);
    }

private:
    struct RegionState {
        std::string name;
        std::string ingest_key, reduce_key, cluster_key, features_key, threshold_key, forecast_key;
        RegionData data;
        Matrix coords;
        ClusterResult clusters;
        std::map<std::string, features::FeatureTable> thr_groups;
        std::map<std::string, features::FeatureTable> fc_groups;
        ingest::DailySeries fc_target;
        ingest::DailySeries label_cases;
        std::vector<ThresholdCell> cells;
        std::vector<RunSummary> runs;
    };

    template <class F>
    void guarded(Stage s, F&& f) {
        try {
            f();
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(s, e.what());
        }
    }

    bool wants(Stage s) const { return static_cast<int>(s) <= static_cast<int>(until_); }

    std::optional<std::string> lookup(const RegionState& r, Stage s, const std::string& key) {
        auto hit = cache_.get(stage_name(s), key);
        result_.cache_status[r.name + "/" + stage_name(s)] = hit ? "hit" : "miss";
        return hit;
    }

    void region(RegionState& r) {
        if (!wants(Stage::reduce)) return;
        guarded(Stage::reduce, [&] { reduce(r); });
        if (!wants(Stage::cluster)) return;
        guarded(Stage::cluster, [&] { cluster(r); });
        if (!wants(Stage::features)) return;
        guarded(Stage::features, [&] { features(r); });
        if (!wants(Stage::threshold)) return;
        guarded(Stage::threshold, [&] { threshold(r); });
        if (!wants(Stage::forecast)) return;
        guarded(Stage::forecast, [&] { forecast(r); });
        regions_.push_back(std::move(r));
    }

    // ingest -----------------------------------------------------------------------------

    void ingest(RegionState& r, std::size_t index) {
        std::string source;
        if (cfg_.synthetic) {
            source = "synthetic\n" + canonical_config(synth_only(index, r.name));
        } else {
            source = "files\n";
            auto add = [&](const std::filesystem::path& p) {
                const auto path = for_region(p, r.name);
                source += path.filename().string() + "=" + sha256_file(path) + "\n";
            };
            add(cfg_.inputs.posts);
            add(cfg_.inputs.embeddings);
            add(cfg_.inputs.caseload);
            for (const auto& p : cfg_.inputs.mobility) add(p);
            for (const auto& p : cfg_.inputs.gov_response) add(p);
        }
        r.ingest_key = digest({"ingest", r.name, source, std::to_string(cfg_.embed_dim)});
        const auto dir = cache_.path_for("ingest", r.ingest_key).replace_extension("");

        auto hit = lookup(r, Stage::ingest, r.ingest_key);
        json manifest;
        if (hit) {
            manifest = json::parse(*hit);
        } else {
            manifest = materialize(r, index, dir);
            cache_.put("ingest", r.ingest_key, manifest.dump());
        }

        r.data.posts = ingest::parse_posts(dir / "posts.jsonl");
        auto emb = ingest::parse_embeddings(dir / "embeddings.jsonl");
        ingest::cross_check(r.data.posts, emb);
        if (cfg_.embed_dim > 0 && emb.vectors.cols() != cfg_.embed_dim)
            throw DimensionError("embeddings have dimension " + std::to_string(emb.vectors.cols()) + ", config expects " +
                                 std::to_string(cfg_.embed_dim));
        r.data.embeddings = ingest::align_to_posts(r.data.posts, emb).vectors.cast<double>();
        const ingest::SeriesSchema schema;
        r.data.caseload = ingest::load_series_csv(dir / "caseload.csv", schema, r.name);
        for (const auto& f : manifest.at("mobility")) {
            r.data.mobility.push_back(ingest::load_series_csv(dir / f.get<std::string>(), schema, r.name));
        }
        for (const auto& f : manifest.at("gov")) {
            r.data.gov.push_back(ingest::load_series_csv(dir / f.get<std::string>(), schema, r.name));
        }
    }

    PipelineConfig synth_only(std::size_t index, const std::string& region) const {
        PipelineConfig c;
        c.synthetic = true;
        c.synth = cfg_.synth;
        c.synth.seed = cfg_.synth.seed + index;
        c.synth.region = region;
        return c;
    }

    json materialize(const RegionState& r, std::size_t index, const std::filesystem::path& dir) {
        std::filesystem::create_directories(dir);
        json manifest{{"mobility", json::array()}, {"gov", json::array()}};
        auto put_series = [&](const ingest::DailySeries& s, const std::string& file) {
            std::ostringstream o;
            ingest::write_series_csv(o, s);
            atomic_write(dir / file, o.str());
        };
        if (cfg_.synthetic) {
            SynthData d = synth_generate(synth_only(index, r.name).synth);
            std::ostringstream posts, emb;
            ingest::write_posts(posts, d.posts);
            ingest::write_embeddings(emb, d.embeddings);
            atomic_write(dir / "posts.jsonl", posts.str());
            atomic_write(dir / "embeddings.jsonl", emb.str());
            put_series(d.caseload, "caseload.csv");
            for (const auto& s : d.mobility) {
                put_series(s, s.name + ".csv");
                manifest["mobility"].push_back(s.name + ".csv");
            }
            for (const auto& s : d.gov_response) {
                put_series(s, s.name + ".csv");
                manifest["gov"].push_back(s.name + ".csv");
            }
            return manifest;
        }
        // Parse first so malformed inputs fail here with their line numbers.
        auto posts = ingest::parse_posts(for_region(cfg_.inputs.posts, r.name));
        auto emb = ingest::parse_embeddings(for_region(cfg_.inputs.embeddings, r.name));
        ingest::cross_check(posts, emb);
        std::ostringstream po, eo;
        ingest::write_posts(po, posts);
        ingest::write_embeddings(eo, ingest::align_to_posts(posts, emb));
        atomic_write(dir / "posts.jsonl", po.str());
        atomic_write(dir / "embeddings.jsonl", eo.str());
        const ingest::SeriesSchema schema;
        auto series = [&](const std::filesystem::path& p, const std::string& prefix, const char* list) {
            const auto path = for_region(p, r.name);
            auto s = ingest::load_series_csv(path, schema, r.name);
            s.name = prefix + path.stem().string();
            put_series(s, s.name + ".csv");
            if (list) manifest[list].push_back(s.name + ".csv");
        };
        {
            auto s = ingest::load_series_csv(for_region(cfg_.inputs.caseload, r.name), schema, r.name);
            s.name = "caseload";
            put_series(s, "caseload.csv");
        }
        for (const auto& p : cfg_.inputs.mobility) series(p, "mobility_", "mobility");
        for (const auto& p : cfg_.inputs.gov_response) series(p, "gov_", "gov");
        return manifest;
    }

    // reduce / cluster -----------------------------------------------------------------------

    std::string reduce_params() const {
        std::ostringstream o;
        o << cfg_.reduction << ' ' << cfg_.umap.out_dim;
        if (cfg_.reduction == "umap") {
            const auto& u = cfg_.umap;
            o << ' ' << u.n_neighbors << ' ' << fmt(u.min_dist) << ' ' << fmt(u.spread) << ' ' << u.n_epochs << ' '
              << u.negative_sample_rate << ' ' << fmt(u.learning_rate) << ' ' << u.seed;
        }
        return o.str();
    }

    void reduce(RegionState& r) {
        r.reduce_key = digest({"reduce", r.ingest_key, reduce_params()});
        if (auto hit = lookup(r, Stage::reduce, r.reduce_key)) {
            r.coords = decode_matrix(*hit);
            return;
        }
        const Matrix& X = r.data.embeddings;
        if (cfg_.reduction == "pca") {
            r.coords = dimred::transform(dimred::fit_pca(X, cfg_.umap.out_dim), X);
        } else {
            auto proj = dimred::fit_umap(X, cfg_.umap);
            r.coords = dimred::training_embedding(proj);
        }
        cache_.put("reduce", r.reduce_key, encode_matrix(r.coords));
    }

    void cluster(RegionState& r) {
        const auto& h = cfg_.hdbscan;
        r.cluster_key = digest({"cluster", r.reduce_key, std::to_string(h.min_cluster_size),
                                std::to_string(h.min_samples), h.allow_single_cluster ? "1" : "0"});
        json j;
        if (auto hit = lookup(r, Stage::cluster, r.cluster_key)) {
            j = json::parse(*hit);
        } else {
            auto model = cluster::fit_hdbscan(r.coords, h);
            j["labels"] = model.labels;
            j["clusters"] = json::array();
            for (const auto& c : model.clusters)
                j["clusters"].push_back({{"id", c.id}, {"size", c.size}, {"stability", c.stability},
                                         {"lambda_birth", c.lambda_birth}});
            cache_.put("cluster", r.cluster_key, j.dump());
        }
        r.clusters.labels = j.at("labels").get<std::vector<int>>();
        for (const auto& c : j.at("clusters"))
            r.clusters.clusters.push_back({c.at("id").get<int>(), c.at("size").get<int>(), c.at("stability").get<double>(),
                                           c.at("lambda_birth").get<double>()});
    }

    // features -------------------------------------------------------------------------------

    DateRange span() const {
        return {std::min(cfg_.threshold_range.start, cfg_.forecast_train_start),
                std::max(cfg_.threshold_range.end, cfg_.forecast_test.end)};
    }

    std::vector<std::string> bow_vocabulary(const RegionState& r) const {
        // Background: every other region's corpus. With a single region, the most frequent
        // non-stopword tokens stand in for over-represented words.
        std::set<std::string> stop(default_stopwords().begin(), default_stopwords().end());
        std::vector<std::string> words;
        if (regions_posts_.size() > 1) {
            std::map<std::string, long> background;
            for (const auto& [name, counts] : regions_posts_)
                if (name != r.name)
                    for (const auto& [w, c] : counts) background[w] += c;
            for (const auto& ws : features::overrepresented_words(r.data.posts, background, 400))
                if (!stop.count(ws.word)) words.push_back(ws.word);
        } else {
            std::map<std::string, long> counts;
            for (const auto& p : r.data.posts)
                for (const auto& t : p.tokens)
                    if (!stop.count(t)) ++counts[t];
            std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
            std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
                if (a.second != b.second) return a.second > b.second;
                return a.first < b.first;
            });
            for (const auto& [w, c] : ranked) words.push_back(w);
        }
        if (words.size() > 100) words.resize(100);
        return words;
    }

    void features(RegionState& r) {
        std::string vocab_src;
        for (const auto& w : default_keywords()) vocab_src += w + ",";
        for (const auto& w : default_stopwords()) vocab_src += w + ",";
        std::ostringstream params;
        params << format_date(cfg_.threshold_range.start) << ' ' << format_date(cfg_.threshold_range.end) << ' '
               << format_date(cfg_.forecast_train_start) << ' ' << format_date(cfg_.forecast_train_end) << ' '
               << format_date(cfg_.forecast_test.start) << ' ' << format_date(cfg_.forecast_test.end) << ' '
               << cfg_.smooth_features << ' ' << cfg_.regions.size();
        std::string others;
        if (cfg_.regions.size() > 1)
            for (const auto& name : cfg_.regions) others += name + ",";
        r.features_key = digest({"features", r.cluster_key, params.str(), sha256_hex(vocab_src), others});

        // Label caseload never extends past the observed data.
        const DateRange s = span();
        if (r.data.caseload.end() < s.start) throw CoverageError("caseload ends before the study range");
        r.label_cases = ingest::align_series(r.data.caseload, {s.start, r.data.caseload.end()});
        const DateRange tr{cfg_.forecast_train_start, cfg_.forecast_test.end};
        r.fc_target = forecast::difference(features::moving_average(ingest::align_series(r.data.caseload, tr), 7));

        json j;
        if (auto hit = lookup(r, Stage::features, r.features_key)) {
            j = json::parse(*hit);
        } else {
            j = build_features(r);
            cache_.put("features", r.features_key, j.dump());
        }
        for (const auto& [k, v] : j.at("threshold").items()) r.thr_groups[k] = csv_table(v.get<std::string>(), r.name);
        for (const auto& [k, v] : j.at("forecast").items()) r.fc_groups[k] = csv_table(v.get<std::string>(), r.name);
    }

    json build_features(const RegionState& r) {
        const DateRange s = span();
        const auto& posts = r.data.posts;
        auto aligned = [&](const std::vector<ingest::DailySeries>& v) {
            std::vector<ingest::DailySeries> out;
            for (const auto& x : v) out.push_back(ingest::align_series(x, s));
            return features::from_series(out, s);
        };
        std::map<std::string, features::FeatureTable> g;
        g["T_RoB"] = features::daily_cluster_counts(posts, r.clusters.labels, s);
        {
            auto words = bow_vocabulary(r);
            auto t = features::keyword_counts(posts, words, s);
            for (auto& n : t.names) n = "bow_" + n.substr(3);
            g["T_BoW"] = t;
        }
        g["T_KW"] = features::keyword_counts(posts, default_keywords(), s);
        g["M"] = aligned(r.data.mobility);
        g["G"] = aligned(r.data.gov);
        {
            auto pc = ingest::daily_post_counts(posts, s, r.name);
            pc.name = "posts";
            g["P"] = features::from_series(std::vector<ingest::DailySeries>{pc}, s);
        }
        {
            auto c = ingest::align_series(r.data.caseload, s);
            c.name = "cases";
            g["C"] = features::from_series(std::vector<ingest::DailySeries>{c}, s);
        }
        for (auto& [name, t] : g) t.region = r.name;
        json j{{"threshold", json::object()}, {"forecast", json::object()}};
        for (const auto& [name, t] : g) {
            const bool smooth = cfg_.smooth_features || name == "C";
            j["threshold"][name] = table_csv(smooth ? features::moving_average(t, 7) : t);
        }
        for (const char* name : {"T_RoB", "M", "G"}) j["forecast"][name] = table_csv(features::moving_average(g[name], 7));
        return j;
    }

    // threshold ------------------------------------------------------------------------------

    static std::vector<std::string> groups_of(const std::string& set) {
        if (set == "T_RoB++") return {"T_RoB", "M", "G", "P", "C"};
        if (set == "T_BoW++") return {"T_BoW", "M", "G", "P", "C"};
        return {set};
    }

    void threshold(RegionState& r) {
        std::ostringstream params;
        for (int t : cfg_.taus) params << t << ',';
        params << ';';
        for (double m : cfg_.ms) params << fmt(m) << ',';
        params << ';';
        for (const auto& s : cfg_.feature_sets) params << s << ',';
        params << ';' << cfg_.seed << ' ' << cfg_.forest.n_trees << ' ' << cfg_.forest.max_depth << ' '
               << cfg_.forest.min_samples_split << ' ' << cfg_.forest.seed << ' '
               << (cfg_.split == threshold::SplitMode::random ? "random" : "chronological") << ' ' << cfg_.top_features;
        r.threshold_key = digest({"threshold", r.features_key, params.str()});

        json j;
        if (auto hit = lookup(r, Stage::threshold, r.threshold_key)) {
            j = json::parse(*hit);
        } else {
            j = json::array();
            const auto mu = features::moving_average(r.label_cases, 7);
            for (const auto& set : cfg_.feature_sets) {
                std::vector<features::FeatureTable> parts;
                std::map<std::string, std::string> group_of;
                for (const auto& g : groups_of(set)) {
                    const auto& t = r.thr_groups.at(g);
                    parts.push_back(t.slice(cfg_.threshold_range));
                    for (const auto& n : t.names) group_of[n] = g;
                }
                const auto table = features::concat(parts);
                for (int tau : cfg_.taus)
                    for (double m : cfg_.ms) {
                        auto cell = threshold_cell(table, group_of, mu, set, tau, m);
                        j.push_back({{"set", cell.set}, {"tau", cell.tau}, {"m", cell.m}, {"status", cell.status},
                                     {"accuracy", cell.accuracy}, {"n_train", cell.n_train}, {"n_test", cell.n_test},
                                     {"positives", cell.positives}, {"groups", cell.groups}});
                    }
            }
            cache_.put("threshold", r.threshold_key, j.dump());
        }
        for (const auto& c : j) {
            ThresholdCell cell;
            cell.set = c.at("set");
            cell.tau = c.at("tau");
            cell.m = c.at("m");
            cell.status = c.at("status");
            cell.accuracy = c.at("accuracy");
            cell.n_train = c.at("n_train");
            cell.n_test = c.at("n_test");
            cell.positives = c.at("positives");
            cell.groups = c.at("groups").get<std::map<std::string, double>>();
            r.cells.push_back(std::move(cell));
        }
    }

    ThresholdCell threshold_cell(const features::FeatureTable& table, const std::map<std::string, std::string>& group_of,
                                 const ingest::DailySeries& mu, const std::string& set, int tau, double m) const {
        ThresholdCell cell;
        cell.set = set;
        cell.tau = tau;
        cell.m = m;
        auto labeling = threshold::label_days(mu, {tau, m});
        std::erase_if(labeling.days, [&](const threshold::DayLabel& d) { return !cfg_.threshold_range.contains(d.day); });
        for (const auto& d : labeling.days) cell.positives += d.label;
        const auto rows = threshold::make_rows(table, labeling);
        const int neg = int(rows.rows()) - cell.positives;
        const int minority = std::min(cell.positives, neg);
        // Training needs at least ten balanced rows after the hold-out.
        if (2 * minority - int(std::ceil(0.5 * minority)) < 10) {
            cell.status = "too_few_positives";
            return cell;
        }
        auto ds = threshold::balance_and_split(rows, cfg_.seed, 0.25, cfg_.split);
        const auto train = ds.indices(false);
        cell.n_train = int(train.size());
        cell.n_test = int(ds.indices(true).size());
        if (cell.n_train < 10 || cell.n_test == 0) {
            cell.status = "too_few_positives";
            return cell;
        }

        // Text count groups are pruned by chi-squared on the training rows.
        std::vector<std::string> keep;
        const Matrix Xtr = ds.rows_of(train);
        const auto ytr = ds.labels_of(train);
        std::map<std::string, std::vector<int>> cols_by_group;
        for (std::size_t c = 0; c < ds.names.size(); ++c) cols_by_group[group_of.at(ds.names[c])].push_back(int(c));
        for (const auto& g : groups_of(set)) {
            const auto& cols = cols_by_group[g];
            const bool prune = (g == "T_RoB" || g == "T_BoW") && cols.size() > cfg_.top_features;
            if (!prune) {
                for (int c : cols) keep.push_back(ds.names[std::size_t(c)]);
                continue;
            }
            Matrix sub(Xtr.rows(), Eigen::Index(cols.size()));
            std::vector<std::string> names;
            for (std::size_t k = 0; k < cols.size(); ++k) {
                sub.col(Eigen::Index(k)) = Xtr.col(cols[k]);
                names.push_back(ds.names[std::size_t(cols[k])]);
            }
            for (const auto& n : features::chi2_select(sub, names, ytr, cfg_.top_features).names()) keep.push_back(n);
        }
        if (keep.empty()) {
            cell.status = "no_features";
            return cell;
        }
        threshold::ThresholdDataset sel = ds;
        sel.names = keep;
        sel.X.resize(ds.X.rows(), Eigen::Index(keep.size()));
        for (std::size_t k = 0; k < keep.size(); ++k) {
            const auto it = std::find(ds.names.begin(), ds.names.end(), keep[k]);
            sel.X.col(Eigen::Index(k)) = ds.X.col(it - ds.names.begin());
        }
        auto model = threshold::train_forest(sel, cfg_.forest);
        cell.accuracy = threshold::evaluate(model, sel);
        std::map<std::string, std::string> groups;
        for (const auto& n : keep) groups[n] = group_of.at(n);
        cell.groups = threshold::grouped_importance(model, groups);
        return cell;
    }

    // forecast -------------------------------------------------------------------------------

    void forecast(RegionState& r) {
        std::ostringstream params;
        for (int h : cfg_.horizons) params << h << ',';
        params << ';';
        for (const auto& m : cfg_.forecast_models) params << m << ',';
        params << ';';
        for (const auto& s : cfg_.covariate_sets) params << s << ',';
        const auto& gp = cfg_.gp;
        const auto& tf = cfg_.transformer;
        params << ';' << cfg_.seed << ' ' << cfg_.n_draws << ' ' << cfg_.top_features << ' ' << gp.optimize << ' '
               << fmt(gp.initial.signal_var) << ' ' << fmt(gp.initial.lengthscale) << ' ' << fmt(gp.initial.noise_var) << ' '
               << gp.restarts << ' ' << gp.evals_per_restart << ' ' << fmt(gp.noise_floor) << ' ' << fmt(gp.time_scale)
               << ' ' << tf.d_model << ' ' << tf.n_heads << ' ' << tf.n_layers << ' ' << tf.d_ff << ' ' << tf.context_len
               << ' ' << tf.epochs << ' ' << tf.batch_size << ' ' << fmt(tf.learning_rate) << ' ' << tf.seed << ' '
               << cfg_.error_samples << ' ' << cfg_.signed_errors;
        r.forecast_key = digest({"forecast", r.features_key, params.str()});

        json j;
        if (auto hit = lookup(r, Stage::forecast, r.forecast_key)) {
            j = json::parse(*hit);
        } else {
            forecast::AblationInput in;
            in.region = r.name;
            in.target = r.fc_target;
            in.groups = r.fc_groups;
            in.train_end = cfg_.forecast_train_end;
            in.test = cfg_.forecast_test;
            in.horizons = cfg_.horizons;
            in.top_features = cfg_.top_features;
            forecast::AblationConfig ac;
            ac.models = cfg_.forecast_models;
            ac.gp = cfg_.gp;
            ac.transformer = cfg_.transformer;
            ac.transformer.seed = cfg_.transformer.seed;
            ac.n_draws = cfg_.n_draws;
            ac.seed = cfg_.seed;
            std::vector<forecast::CovariateSet> sets;
            for (const auto& s : cfg_.covariate_sets) sets.push_back(forecast::parse_set(s));
            j = json::array();
            for (const auto& run : forecast::ablation_run(in, sets, ac)) {
                std::vector<stats::DayDraws> days;
                json points = json::array();
                for (const auto& p : run.points) {
                    days.push_back({p.actual, p.draws});
                    double mean = 0.0;
                    for (double d : p.draws) mean += d;
                    mean /= double(p.draws.size());
                    double var = 0.0;
                    for (double d : p.draws) var += (d - mean) * (d - mean);
                    points.push_back({format_date(p.origin), format_date(p.day), p.actual, p.mean,
                                      std::sqrt(var / double(p.draws.size()))});
                }
                auto dist = stats::build_error_distribution(days, cfg_.error_samples, cfg_.signed_errors);
                j.push_back({{"model", run.model}, {"set", run.set}, {"horizon", run.horizon}, {"seed", run.seed},
                             {"rmse", run.rmse}, {"err_mean", dist.mean}, {"err_var", dist.variance},
                             {"n_samples", dist.samples.size()}, {"points", points}});
            }
            cache_.put("forecast", r.forecast_key, j.dump());
        }
        for (const auto& e : j) {
            RunSummary s;
            s.run.model = e.at("model");
            s.run.set = e.at("set");
            s.run.region = r.name;
            s.run.horizon = e.at("horizon");
            s.run.seed = e.at("seed");
            s.run.rmse = e.at("rmse");
            s.errors = {e.at("err_mean").get<double>(), e.at("err_var").get<double>(), e.at("n_samples").get<std::size_t>()};
            for (const auto& p : e.at("points")) {
                forecast::ForecastPoint pt;
                pt.origin = parse_date(p[0].get<std::string>());
                pt.day = parse_date(p[1].get<std::string>());
                pt.actual = p[2];
                pt.mean = p[3];
                s.sd.push_back(p[4]);
                s.run.points.push_back(std::move(pt));
            }
            r.runs.push_back(std::move(s));
        }
    }

    // report ---------------------------------------------------------------------------------

    void emit(const std::string& name, const std::string& content) {
        const auto path = cfg_.out_dir / name;
        atomic_write(path, content);
        result_.artifacts.push_back(path);
    }

    std::vector<std::string> head(std::initializer_list<std::string> extra) const {
        std::vector<std::string> h{"config_hash", "seed"};
        h.insert(h.end(), extra);
        return h;
    }

    std::vector<std::string> prov() const { return {hash_, std::to_string(cfg_.seed)}; }

    void report() {
        std::string keys;
        for (const auto& r : regions_) keys += r.threshold_key + r.forecast_key + r.cluster_key;
        const std::string key = digest({"report", keys, std::to_string(cfg_.figure_coords), std::to_string(int(cfg_.z_mode))});
        auto hit = cache_.get("report", key);
        for (const auto& r : regions_) result_.cache_status[r.name + "/report"] = hit ? "hit" : "miss";

        emit("config.ini", canonical_config(cfg_));
        threshold_tables();
        forecast_tables();
        cluster_tables();
        if (!hit) cache_.put("report", key, "done");
    }

    static double mean_of(const std::vector<double>& v) {
        if (v.empty()) return std::nan("");
        double s = 0.0;
        for (double x : v) s += x;
        return s / double(v.size());
    }

    static double sd_of(const std::vector<double>& v) {
        if (v.size() < 2) return 0.0;
        const double m = mean_of(v);
        double s = 0.0;
        for (double x : v) s += (x - m) * (x - m);
        return std::sqrt(s / double(v.size() - 1));
    }

    static std::string cell_text(double v) { return std::isnan(v) ? "" : fmt(v); }

    void threshold_tables() {
        std::ostringstream all;
        csv::write_row(all, head({"state", "feature_set", "tau", "m", "status", "accuracy", "n_train", "n_test", "positives"}));
        for (const auto& r : regions_)
            for (const auto& c : r.cells) {
                auto row = prov();
                row.insert(row.end(), {r.name, c.set, std::to_string(c.tau), fmt(c.m), c.status,
                                       c.status == "ok" ? fmt(c.accuracy) : "", std::to_string(c.n_train),
                                       std::to_string(c.n_test), std::to_string(c.positives)});
                csv::write_row(all, row);
            }
        emit("threshold_accuracy.csv", all.str());

        // Horizon table: mean over thresholds and states.
        std::ostringstream t1;
        {
            std::vector<std::string> h = head({"feature_set"});
            for (int tau : cfg_.taus) h.push_back("tau_" + std::to_string(tau));
            h.push_back("avg");
            csv::write_row(t1, h);
            for (const auto& set : cfg_.feature_sets) {
                auto row = prov();
                row.push_back(set);
                std::vector<double> every;
                for (int tau : cfg_.taus) {
                    std::vector<double> v;
                    for (const auto& r : regions_)
                        for (const auto& c : r.cells)
                            if (c.set == set && c.tau == tau && c.status == "ok") v.push_back(c.accuracy);
                    every.insert(every.end(), v.begin(), v.end());
                    row.push_back(cell_text(mean_of(v)));
                }
                row.push_back(cell_text(mean_of(every)));
                csv::write_row(t1, row);
            }
        }
        emit("table1_horizon.csv", t1.str());

        // Threshold table at the horizon closest to two weeks.
        int tau2 = cfg_.taus.front();
        for (int t : cfg_.taus)
            if (std::abs(t - 14) < std::abs(tau2 - 14)) tau2 = t;
        std::ostringstream t2;
        {
            std::vector<std::string> h = head({"tau", "feature_set"});
            for (double m : cfg_.ms) h.push_back("m_" + fmt(m));
            h.insert(h.end(), {"avg", "sd"});
            csv::write_row(t2, h);
            for (const auto& set : cfg_.feature_sets) {
                auto row = prov();
                row.insert(row.end(), {std::to_string(tau2), set});
                std::vector<double> means;
                for (double m : cfg_.ms) {
                    std::vector<double> v;
                    for (const auto& r : regions_)
                        for (const auto& c : r.cells)
                            if (c.set == set && c.tau == tau2 && c.m == m && c.status == "ok") v.push_back(c.accuracy);
                    const double mv = mean_of(v);
                    if (!std::isnan(mv)) means.push_back(mv);
                    row.push_back(cell_text(mv));
                }
                row.push_back(cell_text(mean_of(means)));
                row.push_back(fmt(sd_of(means)));
                csv::write_row(t2, row);
            }
        }
        emit("table2_threshold.csv", t2.str());

        // Grouped importances for the combined sets.
        std::ostringstream t3;
        {
            std::vector<std::string> h = head({"feature_set", "group"});
            for (int tau : cfg_.taus) h.push_back("tau_" + std::to_string(tau));
            h.push_back("avg");
            csv::write_row(t3, h);
            for (const auto& set : cfg_.feature_sets) {
                if (set.size() < 2 || set.substr(set.size() - 2) != "++") continue;
                for (const auto& g : groups_of(set)) {
                    auto row = prov();
                    row.insert(row.end(), {set, g});
                    std::vector<double> per_tau;
                    for (int tau : cfg_.taus) {
                        std::vector<double> v;
                        for (const auto& r : regions_)
                            for (const auto& c : r.cells)
                                if (c.set == set && c.tau == tau && c.status == "ok") {
                                    auto it = c.groups.find(g);
                                    v.push_back(it == c.groups.end() ? 0.0 : it->second);
                                }
                        const double mv = mean_of(v);
                        if (!std::isnan(mv)) per_tau.push_back(mv);
                        row.push_back(cell_text(mv));
                    }
                    row.push_back(cell_text(mean_of(per_tau)));
                    csv::write_row(t3, row);
                }
            }
        }
        emit("table3_importance.csv", t3.str());
    }

    const RunSummary* find_run(const RegionState& r, const std::string& model, const std::string& set, int h) const {
        for (const auto& s : r.runs)
            if (s.run.model == model && s.run.set == set && s.run.horizon == h) return &s;
        return nullptr;
    }

    stats::SignificanceReport significance(const stats::Moments& pop, const stats::Moments& sample) const {
        try {
            return stats::z_test(pop, sample, cfg_.z_mode);
        } catch (const NumericalError&) {
            return {};
        }
    }

    void forecast_tables() {
        if (cfg_.forecast_models.empty()) return;
        std::ostringstream runs;
        for (const auto& r : regions_)
            for (const auto& s : r.runs) {
                stats::SignificanceReport sig;
                const auto* base = find_run(r, s.run.model, "uni", s.run.horizon);
                if (base && s.run.set != "uni") sig = significance(base->errors, s.errors);
                json line{{"model", s.run.model},   {"set", s.run.set},        {"horizon", s.run.horizon},
                          {"state", r.name},        {"seed", s.run.seed},      {"rmse", s.run.rmse},
                          {"n_samples", s.errors.n}, {"z", sig.z},             {"p", sig.p},
                          {"stars", sig.stars},     {"config_hash", hash_}};
                runs << line.dump() << '\n';
            }
        emit("forecast_runs.jsonl", runs.str());

        std::ostringstream pred;
        csv::write_row(pred, head({"state", "model", "set", "horizon", "origin", "day", "actual", "mean", "sd"}));
        for (const auto& r : regions_)
            for (const auto& s : r.runs)
                for (std::size_t i = 0; i < s.run.points.size(); ++i) {
                    const auto& p = s.run.points[i];
                    auto row = prov();
                    row.insert(row.end(), {r.name, s.run.model, s.run.set, std::to_string(s.run.horizon),
                                           format_date(p.origin), format_date(p.day), fmt(p.actual), fmt(p.mean),
                                           fmt(s.sd[i])});
                    csv::write_row(pred, row);
                }
        emit("predictions.csv", pred.str());

        // Ablation table: RMSE averaged over horizons and states, Z-test on pooled errors.
        auto pooled = [&](const std::string& model, const std::string& set, std::optional<int> h,
                          std::vector<double>& rmses) {
            std::vector<stats::Moments> parts;
            for (const auto& r : regions_)
                for (int hz : cfg_.horizons) {
                    if (h && hz != *h) continue;
                    if (const auto* s = find_run(r, model, set, hz)) {
                        parts.push_back(s->errors);
                        rmses.push_back(s->run.rmse);
                    }
                }
            return stats::Moments::pool(parts);
        };
        auto cell = [&](const std::string& model, const std::string& set, std::optional<int> h) {
            std::vector<double> rmses, base_rmses;
            const auto m = pooled(model, set, h, rmses);
            if (rmses.empty()) return std::string();
            std::string text = fmt(mean_of(rmses));
            if (set != "uni") {
                const auto b = pooled(model, "uni", h, base_rmses);
                if (b.n >= 2 && m.n >= 2) text += significance(b, m).stars;
            }
            return text;
        };
        std::ostringstream t4;
        {
            std::vector<std::string> h = head({"set"});
            for (const auto& m : cfg_.forecast_models) h.push_back(m);
            csv::write_row(t4, h);
            for (const auto& set : cfg_.covariate_sets) {
                auto row = prov();
                row.push_back(set);
                for (const auto& m : cfg_.forecast_models) row.push_back(cell(m, set, std::nullopt));
                csv::write_row(t4, row);
            }
        }
        emit("table4_ablation.csv", t4.str());

        std::ostringstream t5;
        {
            std::vector<std::string> h = head({"model", "set"});
            for (int hz : cfg_.horizons) h.push_back("T_" + std::to_string(hz));
            csv::write_row(t5, h);
            for (const auto& m : cfg_.forecast_models)
                for (const auto& set : cfg_.covariate_sets) {
                    auto row = prov();
                    row.insert(row.end(), {m, set});
                    for (int hz : cfg_.horizons) row.push_back(cell(m, set, hz));
                    csv::write_row(t5, row);
                }
        }
        emit("table5_horizon.csv", t5.str());
    }

    void cluster_tables() {
        std::ostringstream labels;
        csv::write_row(labels, head({"state", "cluster", "frequency", "stability", "top_words"}));
        for (const auto& r : regions_) {
            cluster::ClusterModel m;
            m.labels = r.clusters.labels;
            std::map<int, double> stability;
            for (const auto& c : r.clusters.clusters) stability[c.id] = c.stability;
            for (const auto& l : label_clusters(m, r.data.posts)) {
                std::string words;
                for (const auto& w : l.top_words) words += (words.empty() ? "" : " ") + w;
                auto row = prov();
                row.insert(row.end(), {r.name, std::to_string(l.id), std::to_string(l.frequency),
                                       stability.count(l.id) ? fmt(stability[l.id]) : "", words});
                csv::write_row(labels, row);
            }
        }
        emit("cluster_labels.csv", labels.str());

        if (!cfg_.figure_coords) return;
        std::ostringstream coords;
        csv::write_row(coords, head({"state", "post_id", "x", "y", "cluster"}));
        for (const auto& r : regions_) {
            Matrix xy = r.coords;
            if (xy.cols() > 2) xy = dimred::transform(dimred::fit_pca(r.coords, 2), r.coords);
            for (Eigen::Index i = 0; i < xy.rows(); ++i) {
                auto row = prov();
                row.insert(row.end(), {r.name, r.data.posts[std::size_t(i)].id, fmt(xy(i, 0)),
                                       fmt(xy.cols() > 1 ? xy(i, 1) : 0.0), std::to_string(r.clusters.labels[std::size_t(i)])});
                csv::write_row(coords, row);
            }
        }
        emit("umap_coords.csv", coords.str());
    }

    const PipelineConfig& cfg_;
    Stage until_;
    StageCache cache_;
    std::string hash_;
    PipelineResult result_;
    std::vector<RegionState> regions_;
    std::map<std::string, std::map<std::string, long>> regions_posts_;
};

}  // namespace

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::ingest: return "ingest";
        case Stage::reduce: return "reduce";
        case Stage::cluster: return "cluster";
        case Stage::features: return "features";
        case Stage::threshold: return "threshold";
        case Stage::forecast: return "forecast";
        case Stage::report: return "report";
    }
    return "?";
}

Stage parse_stage(const std::string& s) {
    for (Stage st : kStages)
        if (s == stage_name(st)) return st;
    throw ValidationError("unknown stage '" + s + "'");
}

StageError::StageError(Stage s, const std::string& cause)
    : Error(std::string("stage ") + stage_name(s) + ": " + cause), stage(s) {}

PipelineResult run_pipeline(const PipelineConfig& cfg, Stage until) {
    cfg.validate();
    Runner runner(cfg, until);
    return runner.run();
}

}  // namespace episignal::report
