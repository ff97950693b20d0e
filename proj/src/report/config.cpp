#include "episignal/report.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace episignal::report {

namespace pt = boost::property_tree;

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
    return out;
}

template <class T>
std::string join_num(const std::vector<T>& v) {
    std::vector<std::string> s;
    for (const T& x : v) {
        std::ostringstream o;
        o << std::setprecision(17) << x;
        s.push_back(o.str());
    }
    return join(s);
}

std::string num(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    std::ostringstream o;
    o << std::setprecision(17) << x;
    return o.str();
}

class Reader {
public:
    explicit Reader(const pt::ptree& t) : tree_(t) {
        for (const auto& [section, body] : tree_) {
            if (body.empty()) {
                unknown_.insert(section);
                continue;
            }
            for (const auto& kv : body) unknown_.insert(section + "." + kv.first);
        }
    }

    std::optional<std::string> raw(const std::string& key) {
        auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
        if (!v) return std::nullopt;
        unknown_.erase(key);
        return trim(*v);
    }

    void str(const std::string& key, std::string& out) {
        if (auto v = raw(key)) out = *v;
    }
    void integer(const std::string& key, int& out) {
        if (auto v = raw(key)) out = static_cast<int>(parse_int(key, *v));
    }
    void u64(const std::string& key, std::uint64_t& out) {
        if (auto v = raw(key)) {
            const long long x = parse_int(key, *v);
            if (x < 0) throw ValidationError("config: " + key + " must be non-negative");
            out = static_cast<std::uint64_t>(x);
        }
    }
    void size(const std::string& key, std::size_t& out) {
        std::uint64_t x = out;
        u64(key, x);
        out = static_cast<std::size_t>(x);
    }
    void real(const std::string& key, double& out) {
        if (auto v = raw(key)) out = parse_real(key, *v);
    }
    void boolean(const std::string& key, bool& out) {
        if (auto v = raw(key)) {
            if (*v == "true" || *v == "1" || *v == "yes") out = true;
            else if (*v == "false" || *v == "0" || *v == "no") out = false;
            else throw ValidationError("config: " + key + ": expected a boolean, got '" + *v + "'");
        }
    }
    void date(const std::string& key, Date& out) {
        if (auto v = raw(key)) {
            if (!try_parse_date(*v, out)) throw ValidationError("config: " + key + ": bad date '" + *v + "'");
        }
    }
    void strings(const std::string& key, std::vector<std::string>& out) {
        if (auto v = raw(key)) out = split_list(*v);
    }
    void ints(const std::string& key, std::vector<int>& out) {
        if (auto v = raw(key)) {
            out.clear();
            for (const auto& s : split_list(*v)) out.push_back(static_cast<int>(parse_int(key, s)));
        }
    }
    void reals(const std::string& key, std::vector<double>& out) {
        if (auto v = raw(key)) {
            out.clear();
            for (const auto& s : split_list(*v)) out.push_back(parse_real(key, s));
        }
    }

    void reject_unknown() const {
        if (!unknown_.empty()) throw ValidationError("config: unknown key '" + *unknown_.begin() + "'");
    }

private:
    static long long parse_int(const std::string& key, const std::string& s) {
        std::size_t pos = 0;
        long long x = 0;
        try {
            x = std::stoll(s, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != s.size() || s.empty()) throw ValidationError("config: " + key + ": expected an integer, got '" + s + "'");
        return x;
    }
    static double parse_real(const std::string& key, const std::string& s) {
        if (s == "inf") return std::numeric_limits<double>::infinity();
        std::size_t pos = 0;
        double x = 0;
        try {
            x = std::stod(s, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != s.size() || s.empty()) throw ValidationError("config: " + key + ": expected a number, got '" + s + "'");
        return x;
    }

    const pt::ptree& tree_;
    std::set<std::string> unknown_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    if (path.is_relative() && !base.empty()) path = base / path;
    return path;
}

std::filesystem::path for_region(const std::filesystem::path& p, const std::string& region) {
    std::string s = p.string();
    const std::string tag = "{region}";
    for (auto pos = s.find(tag); pos != std::string::npos; pos = s.find(tag)) s.replace(pos, tag.size(), region);
    return s;
}

}  // namespace

void PipelineConfig::validate() const {
    if (regions.empty()) throw ValidationError("config: no regions");
    if (threshold_range.start > threshold_range.end) throw ValidationError("config: threshold range is reversed");
    if (forecast_train_start > forecast_train_end) throw ValidationError("config: forecast train range is reversed");
    if (forecast_test.start > forecast_test.end) throw ValidationError("config: forecast test range is reversed");
    if (forecast_train_end >= forecast_test.start)
        throw ValidationError("config: forecast training must end before the test range starts");
    if (reduction != "umap" && reduction != "pca") throw ValidationError("config: reduction must be umap or pca");
    if (embed_dim < 0) throw ValidationError("config: embed_dim must be >= 0");
    umap.validate();
    if (hdbscan.min_cluster_size < 2) throw ValidationError("config: hdbscan.min_cluster_size must be >= 2");
    if (hdbscan.min_samples < 0) throw ValidationError("config: hdbscan.min_samples must be >= 0");
    if (forest.n_trees < 1 || forest.max_depth < 1 || forest.min_samples_split < 2)
        throw ValidationError("config: bad forest parameters");
    for (int t : taus)
        if (t < 1) throw ValidationError("config: taus must be >= 1");
    for (double m : ms)
        if (!(m > 0.0)) throw ValidationError("config: ms must be positive");
    for (int h : horizons)
        if (h < 1) throw ValidationError("config: horizons must be >= 1");
    for (const auto& m : forecast_models)
        if (m != "martingale" && m != "gp" && m != "transformer")
            throw ValidationError("config: unknown forecast model '" + m + "'");
    for (const auto& s : covariate_sets) forecast::parse_set(s);
    static const std::set<std::string> known_sets{"T_RoB++", "T_BoW++", "T_RoB", "T_BoW", "T_KW", "M", "G", "P", "C"};
    for (const auto& s : feature_sets)
        if (!known_sets.count(s)) throw ValidationError("config: unknown feature set '" + s + "'");
    transformer.validate();
    if (n_draws < 1) throw ValidationError("config: n_draws must be >= 1");
    if (!(gp.time_scale >= 0.0)) throw ValidationError("config: gp.time_scale must be >= 0");
    if (gp.restarts < 1 || gp.evals_per_restart < 1) throw ValidationError("config: gp.restarts and gp.evals_per_restart must be >= 1");
    if (error_samples < 2) throw ValidationError("config: error_samples must be >= 2");
    if (synthetic) {
        synth.validate();
    } else {
        for (const auto& region : regions) {
            auto check = [&](const std::filesystem::path& p, const char* what) {
                const auto r = for_region(p, region);
                if (r.empty()) throw ValidationError(std::string("config: inputs.") + what + " is not set");
                if (!std::filesystem::exists(r))
                    throw ValidationError(std::string("config: inputs.") + what + " not found: " + r.string());
            };
            check(inputs.posts, "posts");
            check(inputs.embeddings, "embeddings");
            check(inputs.caseload, "caseload");
            for (const auto& p : inputs.mobility) check(p, "mobility");
            for (const auto& p : inputs.gov_response) check(p, "gov_response");
        }
    }
}

PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ParseError(static_cast<std::size_t>(e.line()), "config: " + e.message());
    }
    Reader r(tree);
    PipelineConfig c;

    r.strings("run.regions", c.regions);
    r.u64("run.seed", c.seed);
    std::string out = c.out_dir.string();
    r.str("run.out_dir", out);
    c.out_dir = resolve(base_dir, out);

    r.boolean("inputs.synthetic", c.synthetic);
    if (r.raw("inputs.posts")) c.inputs.posts = resolve(base_dir, *r.raw("inputs.posts"));
    if (r.raw("inputs.embeddings")) c.inputs.embeddings = resolve(base_dir, *r.raw("inputs.embeddings"));
    if (r.raw("inputs.caseload")) c.inputs.caseload = resolve(base_dir, *r.raw("inputs.caseload"));
    std::vector<std::string> list;
    r.strings("inputs.mobility", list);
    for (const auto& p : list) c.inputs.mobility.push_back(resolve(base_dir, p));
    list.clear();
    r.strings("inputs.gov_response", list);
    for (const auto& p : list) c.inputs.gov_response.push_back(resolve(base_dir, p));

    auto& sy = c.synth;
    sy.seed = c.seed;
    r.u64("synth.seed", sy.seed);
    r.str("synth.region", sy.region);
    r.date("synth.start", sy.start);
    r.integer("synth.n_days", sy.n_days);
    r.integer("synth.dim", sy.dim);
    r.integer("synth.n_clusters", sy.n_clusters);
    r.integer("synth.lead", sy.lead);
    r.real("synth.snr", sy.snr);
    r.real("synth.noise_fraction", sy.noise_fraction);
    r.real("synth.blob_sd", sy.blob_sd);
    r.real("synth.center_sd", sy.center_sd);
    r.integer("synth.n_waves", sy.n_waves);
    r.real("synth.baseline_cases", sy.baseline_cases);
    r.real("synth.case_noise", sy.case_noise);
    r.real("synth.volume", sy.volume);

    r.date("dates.threshold_start", c.threshold_range.start);
    r.date("dates.threshold_end", c.threshold_range.end);
    r.date("dates.train_start", c.forecast_train_start);
    r.date("dates.train_end", c.forecast_train_end);
    r.date("dates.test_start", c.forecast_test.start);
    r.date("dates.test_end", c.forecast_test.end);

    r.str("reduce.method", c.reduction);
    r.integer("reduce.embed_dim", c.embed_dim);
    c.umap.seed = c.seed;
    r.integer("umap.n_neighbors", c.umap.n_neighbors);
    r.real("umap.min_dist", c.umap.min_dist);
    r.real("umap.spread", c.umap.spread);
    r.integer("umap.n_epochs", c.umap.n_epochs);
    r.integer("umap.out_dim", c.umap.out_dim);
    r.integer("umap.negative_sample_rate", c.umap.negative_sample_rate);
    r.real("umap.learning_rate", c.umap.learning_rate);
    r.integer("umap.transform_steps", c.umap.transform_steps);
    r.u64("umap.seed", c.umap.seed);

    r.integer("hdbscan.min_cluster_size", c.hdbscan.min_cluster_size);
    r.integer("hdbscan.min_samples", c.hdbscan.min_samples);
    r.boolean("hdbscan.allow_single_cluster", c.hdbscan.allow_single_cluster);

    c.forest.seed = c.seed;
    r.integer("forest.n_trees", c.forest.n_trees);
    r.integer("forest.max_depth", c.forest.max_depth);
    r.integer("forest.min_samples_split", c.forest.min_samples_split);
    r.u64("forest.seed", c.forest.seed);

    r.ints("threshold.taus", c.taus);
    r.reals("threshold.ms", c.ms);
    r.boolean("threshold.smooth_features", c.smooth_features);
    std::string split = "random";
    r.str("threshold.split", split);
    if (split == "random") c.split = threshold::SplitMode::random;
    else if (split == "chronological") c.split = threshold::SplitMode::chronological;
    else throw ValidationError("config: threshold.split must be random or chronological");
    r.size("threshold.top_features", c.top_features);
    r.strings("threshold.feature_sets", c.feature_sets);

    r.ints("forecast.horizons", c.horizons);
    r.strings("forecast.models", c.forecast_models);
    r.strings("forecast.covariate_sets", c.covariate_sets);
    r.integer("forecast.n_draws", c.n_draws);

    r.boolean("gp.optimize", c.gp.optimize);
    r.real("gp.signal_var", c.gp.initial.signal_var);
    r.real("gp.lengthscale", c.gp.initial.lengthscale);
    r.real("gp.noise_var", c.gp.initial.noise_var);
    r.integer("gp.restarts", c.gp.restarts);
    r.integer("gp.evals_per_restart", c.gp.evals_per_restart);
    r.real("gp.noise_floor", c.gp.noise_floor);
    r.real("gp.time_scale", c.gp.time_scale);

    auto& tf = c.transformer;
    tf.seed = c.seed;
    r.integer("transformer.d_model", tf.d_model);
    r.integer("transformer.n_heads", tf.n_heads);
    r.integer("transformer.n_layers", tf.n_layers);
    r.integer("transformer.d_ff", tf.d_ff);
    r.integer("transformer.context_len", tf.context_len);
    r.integer("transformer.epochs", tf.epochs);
    r.integer("transformer.batch_size", tf.batch_size);
    r.real("transformer.learning_rate", tf.learning_rate);
    r.u64("transformer.seed", tf.seed);

    r.size("stats.error_samples", c.error_samples);
    std::string z = "summed_variance";
    r.str("stats.z_mode", z);
    if (z == "summed_variance") c.z_mode = stats::ZMode::summed_variance;
    else if (z == "standard_error") c.z_mode = stats::ZMode::standard_error;
    else throw ValidationError("config: stats.z_mode must be summed_variance or standard_error");
    r.boolean("stats.signed_errors", c.signed_errors);

    r.boolean("report.figure_coords", c.figure_coords);
    r.ints("grid.ks", c.grid_ks);
    r.ints("grid.taus", c.grid_taus);

    r.reject_unknown();
    c.source = base_dir;
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("config: cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    PipelineConfig c = parse_config(buf.str(), path.parent_path());
    c.source = path;
    c.validate();
    return c;
}

std::string canonical_config(const PipelineConfig& c) {
    std::vector<std::pair<std::string, std::vector<std::string>>> sections;
    auto kv = [&](const std::string& k, const std::string& v) {
        const auto dot = k.find('.');
        const std::string sec = k.substr(0, dot);
        auto it = std::find_if(sections.begin(), sections.end(), [&](const auto& e) { return e.first == sec; });
        if (it == sections.end()) it = sections.insert(sections.end(), {sec, {}});
        it->second.push_back(k.substr(dot + 1) + " = " + v);
    };
    std::vector<std::string> paths;

    kv("run.regions", join(c.regions));
    kv("run.seed", std::to_string(c.seed));
    kv("inputs.synthetic", c.synthetic ? "true" : "false");
    if (c.synthetic) {
        const auto& s = c.synth;
        kv("synth.seed", std::to_string(s.seed));
        kv("synth.region", s.region);
        kv("synth.start", format_date(s.start));
        kv("synth.n_days", std::to_string(s.n_days));
        kv("synth.dim", std::to_string(s.dim));
        kv("synth.n_clusters", std::to_string(s.n_clusters));
        kv("synth.lead", std::to_string(s.lead));
        kv("synth.snr", num(s.snr));
        kv("synth.noise_fraction", num(s.noise_fraction));
        kv("synth.blob_sd", num(s.blob_sd));
        kv("synth.center_sd", num(s.center_sd));
        kv("synth.n_waves", std::to_string(s.n_waves));
        kv("synth.baseline_cases", num(s.baseline_cases));
        kv("synth.case_noise", num(s.case_noise));
        kv("synth.volume", num(s.volume));
    } else {
        kv("inputs.posts", c.inputs.posts.string());
        kv("inputs.embeddings", c.inputs.embeddings.string());
        kv("inputs.caseload", c.inputs.caseload.string());
        for (const auto& p : c.inputs.mobility) paths.push_back(p.string());
        kv("inputs.mobility", join(paths));
        paths.clear();
        for (const auto& p : c.inputs.gov_response) paths.push_back(p.string());
        kv("inputs.gov_response", join(paths));
    }
    kv("dates.threshold_start", format_date(c.threshold_range.start));
    kv("dates.threshold_end", format_date(c.threshold_range.end));
    kv("dates.train_start", format_date(c.forecast_train_start));
    kv("dates.train_end", format_date(c.forecast_train_end));
    kv("dates.test_start", format_date(c.forecast_test.start));
    kv("dates.test_end", format_date(c.forecast_test.end));
    kv("reduce.method", c.reduction);
    kv("reduce.embed_dim", std::to_string(c.embed_dim));
    kv("umap.n_neighbors", std::to_string(c.umap.n_neighbors));
    kv("umap.min_dist", num(c.umap.min_dist));
    kv("umap.spread", num(c.umap.spread));
    kv("umap.n_epochs", std::to_string(c.umap.n_epochs));
    kv("umap.out_dim", std::to_string(c.umap.out_dim));
    kv("umap.negative_sample_rate", std::to_string(c.umap.negative_sample_rate));
    kv("umap.learning_rate", num(c.umap.learning_rate));
    kv("umap.transform_steps", std::to_string(c.umap.transform_steps));
    kv("umap.seed", std::to_string(c.umap.seed));
    kv("hdbscan.min_cluster_size", std::to_string(c.hdbscan.min_cluster_size));
    kv("hdbscan.min_samples", std::to_string(c.hdbscan.min_samples));
    kv("hdbscan.allow_single_cluster", c.hdbscan.allow_single_cluster ? "true" : "false");
    kv("forest.n_trees", std::to_string(c.forest.n_trees));
    kv("forest.max_depth", std::to_string(c.forest.max_depth));
    kv("forest.min_samples_split", std::to_string(c.forest.min_samples_split));
    kv("forest.seed", std::to_string(c.forest.seed));
    kv("threshold.taus", join_num(c.taus));
    kv("threshold.ms", join_num(c.ms));
    kv("threshold.smooth_features", c.smooth_features ? "true" : "false");
    kv("threshold.split", c.split == threshold::SplitMode::random ? "random" : "chronological");
    kv("threshold.top_features", std::to_string(c.top_features));
    kv("threshold.feature_sets", join(c.feature_sets));
    kv("forecast.horizons", join_num(c.horizons));
    kv("forecast.models", join(c.forecast_models));
    kv("forecast.covariate_sets", join(c.covariate_sets));
    kv("forecast.n_draws", std::to_string(c.n_draws));
    kv("gp.optimize", c.gp.optimize ? "true" : "false");
    kv("gp.signal_var", num(c.gp.initial.signal_var));
    kv("gp.lengthscale", num(c.gp.initial.lengthscale));
    kv("gp.noise_var", num(c.gp.initial.noise_var));
    kv("gp.restarts", std::to_string(c.gp.restarts));
    kv("gp.evals_per_restart", std::to_string(c.gp.evals_per_restart));
    kv("gp.noise_floor", num(c.gp.noise_floor));
    kv("gp.time_scale", num(c.gp.time_scale));
    const auto& tf = c.transformer;
    kv("transformer.d_model", std::to_string(tf.d_model));
    kv("transformer.n_heads", std::to_string(tf.n_heads));
    kv("transformer.n_layers", std::to_string(tf.n_layers));
    kv("transformer.d_ff", std::to_string(tf.d_ff));
    kv("transformer.context_len", std::to_string(tf.context_len));
    kv("transformer.epochs", std::to_string(tf.epochs));
    kv("transformer.batch_size", std::to_string(tf.batch_size));
    kv("transformer.learning_rate", num(tf.learning_rate));
    kv("transformer.seed", std::to_string(tf.seed));
    kv("stats.error_samples", std::to_string(c.error_samples));
    kv("stats.z_mode", c.z_mode == stats::ZMode::summed_variance ? "summed_variance" : "standard_error");
    kv("stats.signed_errors", c.signed_errors ? "true" : "false");
    kv("report.figure_coords", c.figure_coords ? "true" : "false");
    kv("grid.ks", join_num(c.grid_ks));
    kv("grid.taus", join_num(c.grid_taus));
    std::ostringstream o;
    for (const auto& [sec, lines] : sections) {
        if (&sec != &sections.front().first) o << '\n';
        o << '[' << sec << "]\n";
        for (const auto& l : lines) o << l << '\n';
    }
    return o.str();
}

std::string config_hash(const PipelineConfig& cfg) { return sha256_hex(canonical_config(cfg)); }

}  // namespace episignal::report
