#include "episignal/core/error.hpp"
#include "episignal/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

namespace episignal::report {

namespace {

const std::vector<std::string>& topic_words() {
    static const std::vector<std::string> words{
        "fever",    "cough",     "symptoms", "sick",      "tested",    // illness
        "cases",    "numbers",   "county",   "reported",  "rising",    // caseload talk
        "mask",     "wear",      "face",     "covering",  "store",
        "school",   "kids",      "teachers", "remote",    "classes",
        "vaccine",  "dose",      "pfizer",   "moderna",   "appointment",
        "governor", "inslee",    "order",    "phase",     "reopening",
        "work",     "job",       "unemployment", "office", "layoffs",
        "hiking",   "trail",     "park",     "outdoor",   "camping",
        "grocery",  "delivery",  "shopping", "toilet",    "paper",
        "seattle",  "downtown",  "traffic",  "bus",       "ferry",
        "restaurant", "takeout", "dining",   "patio",     "bar",
        "election", "ballot",    "vote",     "president", "debate"};
    return words;
}

std::vector<std::string> blob_vocab(int b) {
    const auto& w = topic_words();
    std::vector<std::string> out;
    for (int i = 0; i < 5; ++i) {
        std::size_t idx = std::size_t(5 * b + i);
        out.push_back(idx < w.size() ? w[idx] : "topic" + std::to_string(b) + "w" + std::to_string(i));
    }
    return out;
}

std::vector<std::string> filler_words() {
    static const char* syll[] = {"ba", "ko", "ri", "mu", "te", "sa", "lin", "dor", "pe", "vu", "xo", "zen", "qua", "fi", "ga"};
    std::vector<std::string> out;
    for (const char* a : syll)
        for (const char* b : syll)
            if (std::string(a) != b) out.push_back(std::string(a) + b + "z");
    return out;
}

std::vector<double> smooth7(const std::vector<double>& v) {
    std::vector<double> out(v.size());
    double sum = 0.0;
    for (std::size_t t = 0; t < v.size(); ++t) {
        sum += v[t];
        if (t >= 7) sum -= v[t - 7];
        out[t] = sum / double(std::min<std::size_t>(t + 1, 7));
    }
    return out;
}

}  // namespace

void SynthConfig::validate() const {
    if (lead < 1) throw ValidationError("synth: lead must be >= 1");
    if (n_days <= lead + 28) throw ValidationError("synth: n_days must exceed lead + 28");
    if (n_clusters < 2) throw ValidationError("synth: need at least 2 clusters (signal and echo)");
    if (dim < 2) throw ValidationError("synth: dim must be >= 2");
    if (!(snr > 0.0)) throw ValidationError("synth: snr must be positive");
    if (!(noise_fraction >= 0.0 && noise_fraction < 1.0)) throw ValidationError("synth: noise_fraction must be in [0, 1)");
    if (n_waves < 1) throw ValidationError("synth: n_waves must be >= 1");
    if (!(volume > 0.0)) throw ValidationError("synth: volume must be positive");
}

SynthData synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto U = [&](double a, double b) { return a + (b - a) * unif(rng); };

    const int n = cfg.n_days;
    const int ext = n + cfg.lead + 1;

    // Caseload: baseline plus logistic-derivative waves, alternating sharp surges and slow drifts.
    std::vector<double> clean(static_cast<std::size_t>(ext), cfg.baseline_cases);
    for (int k = 0; k < cfg.n_waves; ++k) {
        const bool sharp = k % 2 == 0;
        const double centre = double(n) * (double(k) + 0.5) / double(cfg.n_waves) + U(-10.0, 10.0);
        const double height = sharp ? U(300.0, 2000.0) : U(50.0, 300.0);
        const double rate = sharp ? U(0.15, 0.25) : U(0.03, 0.06);
        for (int t = 0; t < ext; ++t) {
            const double ch = std::cosh(rate * (double(t) - centre) / 2.0);
            clean[std::size_t(t)] += height / (ch * ch);
        }
    }
    std::vector<double> dclean(static_cast<std::size_t>(ext), 0.0);
    double dmax = 0.0;
    for (int t = 1; t < ext; ++t) {
        dclean[std::size_t(t)] = clean[std::size_t(t)] - clean[std::size_t(t - 1)];
        dmax = std::max(dmax, std::fabs(dclean[std::size_t(t)]));
    }
    const double cmax = *std::max_element(clean.begin(), clean.begin() + n);

    SynthData out;
    out.caseload = {cfg.region, "caseload", cfg.start, {}};
    for (int t = 0; t < n; ++t)
        out.caseload.values.push_back(
            std::max(0.0, std::round(clean[std::size_t(t)] * (1.0 + cfg.case_noise * normal(rng)))));

    // Per-blob daily rates.
    const int k = cfg.n_clusters;
    std::vector<std::vector<double>> rate(static_cast<std::size_t>(k), std::vector<double>(std::size_t(n)));
    const double gain = dmax > 0.0 ? 12.0 / dmax : 0.0;
    for (int t = 0; t < n; ++t) {
        rate[0][std::size_t(t)] = cfg.volume * std::max(0.0, 12.0 + gain * dclean[std::size_t(t + cfg.lead)]);
        rate[1][std::size_t(t)] = cfg.volume * (2.0 + 12.0 * clean[std::size_t(t)] / cmax);
    }
    for (int b = 2; b < k; ++b) {
        const double base = U(0.6, 2.0);
        double x = 0.0;
        for (int t = 0; t < n; ++t) {
            x = 0.97 * x + 0.08 * normal(rng);
            rate[std::size_t(b)][std::size_t(t)] = cfg.volume * base * std::exp(x);
        }
    }
    std::vector<std::vector<int>> counts(static_cast<std::size_t>(k), std::vector<int>(std::size_t(n)));
    for (int b = 0; b < k; ++b) {
        const auto& r = rate[std::size_t(b)];
        const double mean = std::accumulate(r.begin(), r.end(), 0.0) / double(n);
        double var = 0.0;
        for (double v : r) var += (v - mean) * (v - mean);
        const double sd = std::sqrt(var / double(n));
        const double noise_sd = std::isinf(cfg.snr) ? 0.0 : sd / cfg.snr;
        // Stochastic rounding keeps the expected count at low volume.
        for (int t = 0; t < n; ++t) {
            const double v = std::max(0.0, r[std::size_t(t)] + noise_sd * normal(rng));
            const double whole = std::floor(v);
            counts[std::size_t(b)][std::size_t(t)] = int(whole) + (unif(rng) < v - whole ? 1 : 0);
        }
    }
    double blob_total = 0.0;
    for (const auto& c : counts) blob_total += std::accumulate(c.begin(), c.end(), 0.0);
    const double noise_rate = cfg.noise_fraction / (1.0 - cfg.noise_fraction) * blob_total / double(n);

    // Geometry.
    Matrix centers(k, cfg.dim);
    for (int b = 0; b < k; ++b)
        for (int c = 0; c < cfg.dim; ++c) centers(b, c) = cfg.center_sd * normal(rng);
    const double box = 3.0 * cfg.center_sd;

    out.manifest.config = cfg;
    out.manifest.signal_blob = 0;
    out.manifest.echo_blob = 1;
    for (int b = 0; b < k; ++b) out.manifest.vocab.push_back(blob_vocab(b));
    out.manifest.clean_cases.assign(clean.begin(), clean.begin() + n);

    const auto& stop = default_stopwords();
    const auto fillers = filler_words();
    std::uniform_int_distribution<std::size_t> pick_stop(0, std::min<std::size_t>(stop.size(), 40) - 1);
    std::uniform_int_distribution<std::size_t> pick_fill(0, fillers.size() - 1);

    struct Draft {
        ingest::PostRecord post;
        int blob;
        std::vector<float> v;
    };
    std::vector<Draft> drafts;
    auto emit = [&](Date day, int blob) {
        Draft d;
        d.blob = blob;
        d.post.day = day;
        d.post.region = cfg.region;
        d.post.utc = utc_midnight(day) + std::int64_t(unif(rng) * 86399.0);
        d.post.id = "p" + std::to_string(drafts.size());
        d.v.resize(std::size_t(cfg.dim));
        if (blob >= 0) {
            const auto& vocab = out.manifest.vocab[std::size_t(blob)];
            // Zipf-like weights keep the planted words' frequency order stable.
            std::vector<double> w{1.0, 0.8, 0.65, 0.5, 0.4};
            std::vector<std::size_t> chosen;
            while (chosen.size() < 3) {
                std::discrete_distribution<std::size_t> dd(w.begin(), w.end());
                std::size_t i = dd(rng);
                if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) chosen.push_back(i);
            }
            for (std::size_t i : chosen) d.post.tokens.push_back(vocab[i]);
            for (int c = 0; c < cfg.dim; ++c) d.v[std::size_t(c)] = float(centers(blob, c) + cfg.blob_sd * normal(rng));
        } else {
            for (int i = 0; i < 3; ++i) d.post.tokens.push_back(fillers[pick_fill(rng)]);
            for (int c = 0; c < cfg.dim; ++c) d.v[std::size_t(c)] = float(U(-box, box));
        }
        d.post.tokens.push_back(stop[pick_stop(rng)]);
        d.post.tokens.push_back(fillers[pick_fill(rng)]);
        d.post.tokens.push_back(stop[pick_stop(rng)]);
        drafts.push_back(std::move(d));
    };
    std::poisson_distribution<int> noise_count(std::max(noise_rate, 1e-12));
    for (int t = 0; t < n; ++t) {
        const Date day = add_days(cfg.start, t);
        for (int b = 0; b < k; ++b)
            for (int c = 0; c < counts[std::size_t(b)][std::size_t(t)]; ++c) emit(day, b);
        const int nn = cfg.noise_fraction > 0.0 ? noise_count(rng) : 0;
        for (int c = 0; c < nn; ++c) emit(day, -1);
    }

    // Emit in the order parse_posts produces: (day, utc, id).
    std::vector<std::size_t> order(drafts.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& pa = drafts[a].post;
        const auto& pb = drafts[b].post;
        if (pa.day != pb.day) return pa.day < pb.day;
        if (pa.utc != pb.utc) return pa.utc < pb.utc;
        return pa.id < pb.id;
    });
    out.embeddings.vectors.resize(Eigen::Index(drafts.size()), cfg.dim);
    for (std::size_t i = 0; i < order.size(); ++i) {
        Draft& d = drafts[order[i]];
        out.posts.push_back(d.post);
        out.embeddings.ids.push_back(d.post.id);
        for (int c = 0; c < cfg.dim; ++c) out.embeddings.vectors(Eigen::Index(i), c) = d.v[std::size_t(c)];
        out.manifest.post_blob.push_back(d.blob);
    }

    // Covariates: smoothed random walks.
    auto walk = [&](const std::string& group, const std::string& name, double level, double step, double lo, double hi) {
        std::vector<double> v(static_cast<std::size_t>(n));
        double x = level;
        for (int t = 0; t < n; ++t) {
            x = std::clamp(x + step * normal(rng), lo, hi);
            v[std::size_t(t)] = x;
        }
        v = smooth7(v);
        for (double& e : v) e = std::round(e * 100.0) / 100.0;
        return ingest::DailySeries{cfg.region, group + "_" + name, cfg.start, v};
    };
    for (const char* name : {"retail", "grocery", "parks", "transit", "workplaces", "residential"})
        out.mobility.push_back(walk("mobility", name, 0.0, 3.0, -80.0, 40.0));
    for (const char* name : {"stringency", "containment", "health", "economic"})
        out.gov_response.push_back(walk("gov", name, 40.0, 2.0, 0.0, 100.0));
    return out;
}

void write_synth(const SynthData& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&](const std::string& name) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw Error("write_synth: cannot open " + (dir / name).string());
        return f;
    };
    {
        auto f = open("posts.jsonl");
        ingest::write_posts(f, data.posts);
    }
    {
        auto f = open("embeddings.jsonl");
        ingest::write_embeddings(f, data.embeddings);
    }
    {
        auto f = open("caseload.csv");
        ingest::write_series_csv(f, data.caseload);
    }
    for (const auto& s : data.mobility) {
        auto f = open(s.name + ".csv");
        ingest::write_series_csv(f, s);
    }
    for (const auto& s : data.gov_response) {
        auto f = open(s.name + ".csv");
        ingest::write_series_csv(f, s);
    }
    nlohmann::json m;
    const auto& c = data.manifest.config;
    m["seed"] = c.seed;
    m["region"] = c.region;
    m["start"] = format_date(c.start);
    m["n_days"] = c.n_days;
    m["dim"] = c.dim;
    m["n_clusters"] = c.n_clusters;
    m["lead"] = c.lead;
    m["snr"] = std::isinf(c.snr) ? nlohmann::json("inf") : nlohmann::json(c.snr);
    m["noise_fraction"] = c.noise_fraction;
    m["volume"] = c.volume;
    m["signal_blob"] = data.manifest.signal_blob;
    m["echo_blob"] = data.manifest.echo_blob;
    m["vocab"] = data.manifest.vocab;
    m["post_blob"] = data.manifest.post_blob;
    auto f = open("manifest.json");
    f << m.dump() << '\n';
}

}  // namespace episignal::report
