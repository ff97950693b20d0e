#include "episignal/core/error.hpp"
#include "episignal/features.hpp"
#include "episignal/report.hpp"

#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace episignal;
using namespace episignal::report;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("episignal_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

PipelineConfig quick(const fs::path& out) {
    auto cfg = load_config(fs::path(EPISIGNAL_TEST_DATA) / "quick.ini");
    cfg.out_dir = out;
    return cfg;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) files[e.path().filename().string()] = slurp(e.path());
    return files;
}

ingest::PostRecord post(const std::string& id, std::vector<std::string> tokens) {
    return {id, parse_date("2020-03-01"), "WA", std::move(tokens), utc_midnight(parse_date("2020-03-01"))};
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = double(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n, mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_SUITE("report") {

TEST_CASE("cluster labels") {
    std::vector<ingest::PostRecord> posts{post("a", {"mask", "wear", "mask"}), post("b", {"mask", "wear"}),
                                          post("c", {"wear", "mask"}), post("d", {"the", "and", "of"}),
                                          post("e", {"a", "the"})};
    cluster::ClusterModel m;
    m.labels = {0, 0, 0, 1, 1};
    auto l = label_clusters(m, posts);
    REQUIRE(l.size() == 2);
    CHECK(l[0].frequency == 3);
    CHECK(l[0].top_words == std::vector<std::string>{"mask", "wear"});
    CHECK(l[1].frequency == 2);
    CHECK(l[1].top_words.empty());
}

TEST_CASE("cluster labels recover planted vocabulary") {
    SynthConfig sc;
    sc.volume = 0.2;
    auto d = synth_generate(sc);
    cluster::ClusterModel m;
    m.labels = d.manifest.post_blob;
    for (const auto& l : label_clusters(m, d.posts)) {
        const auto& vocab = d.manifest.vocab[std::size_t(l.id)];
        CHECK(std::set<std::string>(l.top_words.begin(), l.top_words.end()) ==
              std::set<std::string>(vocab.begin(), vocab.end()));
    }
}

TEST_CASE("generator: noiseless signal cluster tracks the shifted increase") {
    SynthConfig sc;
    sc.snr = std::numeric_limits<double>::infinity();
    sc.case_noise = 0.0;
    sc.volume = 3.0;
    auto d = synth_generate(sc);
    const DateRange r{sc.start, add_days(sc.start, sc.n_days - 1)};
    auto counts = features::daily_cluster_counts(d.posts, d.manifest.post_blob, r);
    const auto col = "cluster_" + std::to_string(d.manifest.signal_blob);
    const auto sig = counts.select(std::vector<std::string>{col});
    std::vector<double> a, b;
    const auto& clean = d.manifest.clean_cases;
    for (int t = 0; t + sc.lead < sc.n_days; ++t) {
        a.push_back(sig.X(t, 0));
        b.push_back(clean[std::size_t(t + sc.lead)] - clean[std::size_t(t + sc.lead - 1)]);
    }
    CHECK(pearson(a, b) > 0.99);
}

TEST_CASE("generator: fixed seed gives identical files") {
    SynthConfig sc;
    sc.volume = 0.05;
    auto a = scratch("synth_a"), b = scratch("synth_b");
    write_synth(synth_generate(sc), a);
    write_synth(synth_generate(sc), b);
    auto sa = snapshot(a), sb = snapshot(b);
    CHECK(sa.size() >= 5);
    CHECK(sa == sb);
    sc.seed = 1;
    auto c = scratch("synth_c");
    write_synth(synth_generate(sc), c);
    CHECK(snapshot(c)["posts.jsonl"] != sa["posts.jsonl"]);
}

TEST_CASE("generator: f-regression ranks the signal cluster first") {
    SynthConfig sc;
    sc.volume = 0.5;
    auto d = synth_generate(sc);
    const DateRange r{sc.start, add_days(sc.start, sc.n_days - 1 - sc.lead)};
    auto counts = features::daily_cluster_counts(d.posts, d.manifest.post_blob, r);
    const auto mu = features::moving_average(d.caseload, 7);
    std::vector<double> y;
    for (int t = 0; t < int(r.length()); ++t)
        y.push_back(mu.values[std::size_t(t + sc.lead)] - mu.values[std::size_t(t + sc.lead - 1)]);
    auto sel = features::f_regression_select(counts.X, counts.names, y, 25);
    CHECK(sel.kept.front().name == "cluster_" + std::to_string(d.manifest.signal_blob));
}

TEST_CASE("generator: signal cluster survives chi-squared selection") {
    int hits = 0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        SynthConfig sc;
        sc.seed = s;
        sc.volume = 0.5;
        auto d = synth_generate(sc);
        const DateRange r{parse_date("2020-03-07"), parse_date("2021-01-17")};
        auto counts = features::daily_cluster_counts(d.posts, d.manifest.post_blob, r);
        auto lab = threshold::label_days(features::moving_average(d.caseload, 7), {14, 1.0});
        auto ds = threshold::make_rows(counts, lab);
        auto sel = features::chi2_select(ds.X, ds.names, ds.y, 25);
        const auto names = sel.names();
        hits += std::count(names.begin(), names.end(), "cluster_" + std::to_string(d.manifest.signal_blob)) > 0;
    }
    CHECK(hits >= 9);
}

TEST_CASE("config: parse, canonical form, hash, validation") {
    auto cfg = parse_config("[run]\nregions = WA, NY\nseed = 4\n[threshold]\ntaus = 7\n");
    CHECK(cfg.regions == std::vector<std::string>{"WA", "NY"});
    CHECK(cfg.seed == 4);
    CHECK(cfg.taus == std::vector<int>{7});
    auto again = parse_config(canonical_config(cfg));
    CHECK(canonical_config(again) == canonical_config(cfg));
    CHECK(config_hash(again) == config_hash(cfg));
    CHECK(config_hash(cfg).size() == 64);
    cfg.seed = 5;
    CHECK(config_hash(again) != config_hash(cfg));
    CHECK_THROWS(parse_config("[run]\nbogus_key = 1\n"));
    CHECK_THROWS(parse_config("[threshold]\nms = 0.0\n").validate());
    CHECK_THROWS(parse_config("[umap]\nmin_dist = 1.5\n").validate());
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("stage cache and atomic writes") {
    auto dir = scratch("cache");
    StageCache c(dir);
    CHECK_FALSE(c.get("reduce", "k1").has_value());
    c.put("reduce", "k1", std::string("pay\0load", 8));
    CHECK(c.get("reduce", "k1") == std::string("pay\0load", 8));
    CHECK(c.hits == 1);
    CHECK(c.misses == 1);
    atomic_write(dir / "x.txt", "one");
    atomic_write(dir / "x.txt", "two");
    CHECK(slurp(dir / "x.txt") == "two");
    CHECK(parse_stage("cluster") == Stage::cluster);
    CHECK_THROWS(parse_stage("nope"));
}

TEST_CASE("pipeline: tables present with provenance, rerun hits the cache byte-identically") {
    auto out = scratch("pipeline");
    auto cfg = quick(out);
    auto first = run_pipeline(cfg);
    for (const auto& [k, v] : first.cache_status) CHECK(v == "miss");
    const auto hash = config_hash(cfg);
    const std::vector<std::string> expected{"threshold_accuracy.csv", "table1_horizon.csv", "table2_threshold.csv",
                                            "table3_importance.csv", "table4_ablation.csv", "table5_horizon.csv",
                                            "forecast_runs.jsonl", "predictions.csv", "cluster_labels.csv",
                                            "umap_coords.csv", "config.ini"};
    auto files = snapshot(out);
    for (const auto& name : expected) {
        INFO(name);
        REQUIRE(files.count(name));
        if (name.ends_with(".csv") && name != "config.ini") {
            std::istringstream in(files[name]);
            std::string line;
            std::getline(in, line);
            CHECK(line.starts_with("config_hash,seed,"));
            int rows = 0;
            while (std::getline(in, line)) {
                CHECK(line.starts_with(hash + "," + std::to_string(cfg.seed) + ","));
                ++rows;
            }
            CHECK(rows > 0);
        }
    }
    std::istringstream runs(files["forecast_runs.jsonl"]);
    std::string line;
    while (std::getline(runs, line)) {
        auto j = nlohmann::json::parse(line);
        CHECK(j["config_hash"] == hash);
        CHECK(j.contains("seed"));
    }

    auto second = run_pipeline(cfg);
    CHECK(second.cache_status.size() == first.cache_status.size());
    for (const auto& [k, v] : second.cache_status) {
        INFO(k);
        CHECK(v == "hit");
    }
    CHECK(snapshot(out) == files);
}

TEST_CASE("pipeline: corrupted embeddings name the ingest stage and the line") {
    auto dir = scratch("corrupt");
    SynthConfig sc;
    sc.volume = 0.05;
    write_synth(synth_generate(sc), dir / "WA");
    {
        std::ifstream in(dir / "WA" / "embeddings.jsonl");
        std::ostringstream keep;
        std::string line;
        for (int i = 1; std::getline(in, line); ++i) keep << (i == 5 ? line.substr(0, line.size() / 2) : line) << '\n';
        std::ofstream(dir / "WA" / "embeddings.jsonl") << keep.str();
    }
    std::ostringstream ini;
    ini << "[run]\nregions = WA\nout_dir = out\n[inputs]\nsynthetic = false\nposts = {region}/posts.jsonl\n"
        << "embeddings = {region}/embeddings.jsonl\ncaseload = {region}/caseload.csv\n";
    std::vector<std::string> mob, gov;
    for (const auto& e : fs::directory_iterator(dir / "WA")) {
        const auto n = e.path().filename().string();
        if (n.starts_with("mobility_")) mob.push_back("{region}/" + n);
        if (n.starts_with("gov_")) gov.push_back("{region}/" + n);
    }
    std::sort(mob.begin(), mob.end());
    std::sort(gov.begin(), gov.end());
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
        return s;
    };
    ini << "mobility = " << join(mob) << "\ngov_response = " << join(gov) << "\n[reduce]\nmethod = pca\n[umap]\nout_dim = 10\n";
    std::ofstream(dir / "run.ini") << ini.str();

    auto cfg = load_config(dir / "run.ini");
    try {
        run_pipeline(cfg, Stage::ingest);
        FAIL("expected a stage error");
    } catch (const StageError& e) {
        CHECK(e.stage == Stage::ingest);
        const std::string msg = e.what();
        CHECK(msg.find("ingest") != std::string::npos);
        CHECK(msg.find("line 5") != std::string::npos);
    }

    const std::string cmd = std::string("\"") + EPISIGNAL_CLI + "\" --config \"" + (dir / "run.ini").string() +
                            "\" ingest > \"" + (dir / "stderr.txt").string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == 2);
    const auto err = slurp(dir / "stderr.txt");
    CHECK(err.find("stage ingest") != std::string::npos);
    CHECK(err.find("line 5") != std::string::npos);
}

TEST_CASE("grid: one row per reduction, clustering and k at every horizon; silhouette curve emitted") {
    SynthConfig sc;
    sc.volume = 0.1;
    auto d = synth_generate(sc);
    PipelineConfig cfg;
    cfg.umap.out_dim = 5;
    cfg.umap.n_epochs = 50;
    cfg.forest.n_trees = 10;
    GridInput in{d.posts, d.embeddings.vectors.cast<double>(), d.caseload};
    GridOptions opt;
    opt.taus = {14, 21};
    opt.ms = {1.0};
    opt.silhouette_sample = 300;
    auto g = appendix_grid(cfg, in, opt);
    CHECK(g.rows.size() == 2 * 2 * (1 + 6 + 6));
    for (int h : opt.taus)
        CHECK(std::count_if(g.rows.begin(), g.rows.end(), [h](const GridRow& r) { return r.horizon == h; }) == 26);
    CHECK(g.silhouette.size() == 2 * (1 + 6 + 6));
    auto dir = scratch("grid");
    write_grid(g, dir, "h", 0);
    CHECK(fs::exists(dir / "appendix_grid.csv"));
    CHECK(fs::exists(dir / "silhouette.csv"));
}

}  // TEST_SUITE
