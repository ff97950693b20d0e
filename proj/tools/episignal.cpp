#include "episignal/report.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace episignal;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::vector<std::string> regions;
};

report::PipelineConfig load(const Globals& g) {
    report::PipelineConfig cfg = g.config.empty() ? report::PipelineConfig{} : report::load_config(g.config);
    if (g.seed) {
        // An explicit seed reseeds every stochastic component.
        cfg.seed = *g.seed;
        cfg.synth.seed = *g.seed;
        cfg.umap.seed = *g.seed;
        cfg.forest.seed = *g.seed;
        cfg.transformer.seed = *g.seed;
    }
    if (!g.out.empty()) cfg.out_dir = g.out;
    if (!g.regions.empty()) cfg.regions = g.regions;
    cfg.validate();
    return cfg;
}

int run_stage(const Globals& g, report::Stage until) {
    const auto cfg = load(g);
    const auto result = report::run_pipeline(cfg, until);
    for (const auto& [k, v] : result.cache_status) std::cerr << "cache " << k << ' ' << v << '\n';
    for (const auto& p : result.artifacts) std::cout << p.string() << '\n';
    return 0;
}

int run_synth(const Globals& g) {
    const auto cfg = load(g);
    for (std::size_t i = 0; i < cfg.regions.size(); ++i) {
        report::SynthConfig sc = cfg.synth;
        sc.seed = cfg.synth.seed + i;
        sc.region = cfg.regions[i];
        const auto dir = cfg.out_dir / "synth" / sc.region;
        report::write_synth(report::synth_generate(sc), dir);
        std::cout << dir.string() << '\n';
    }
    return 0;
}

report::GridInput grid_input(const report::PipelineConfig& cfg, std::size_t index) {
    const std::string& region = cfg.regions[index];
    report::GridInput in;
    if (cfg.synthetic) {
        report::SynthConfig sc = cfg.synth;
        sc.seed = cfg.synth.seed + index;
        sc.region = region;
        auto d = report::synth_generate(sc);
        in.posts = std::move(d.posts);
        in.embeddings = d.embeddings.vectors.cast<double>();
        in.caseload = std::move(d.caseload);
        return in;
    }
    auto sub = [&](const std::filesystem::path& p) {
        std::string s = p.string();
        for (auto pos = s.find("{region}"); pos != std::string::npos; pos = s.find("{region}")) s.replace(pos, 8, region);
        return std::filesystem::path(s);
    };
    in.posts = ingest::parse_posts(sub(cfg.inputs.posts));
    const auto emb = ingest::parse_embeddings(sub(cfg.inputs.embeddings));
    ingest::cross_check(in.posts, emb);
    in.embeddings = ingest::align_to_posts(in.posts, emb).vectors.cast<double>();
    in.caseload = ingest::load_series_csv(sub(cfg.inputs.caseload), ingest::SeriesSchema{}, region);
    return in;
}

int run_grid(const Globals& g, report::GridOptions opt, bool ks_given, bool taus_given) {
    const auto cfg = load(g);
    if (!ks_given) opt.ks = cfg.grid_ks;
    if (!taus_given) opt.taus = cfg.grid_taus;
    opt.ms = cfg.ms;
    const auto hash = report::config_hash(cfg);
    for (std::size_t i = 0; i < cfg.regions.size(); ++i) {
        const auto result = report::appendix_grid(cfg, grid_input(cfg, i), opt);
        const auto dir = cfg.out_dir / "grid" / cfg.regions[i];
        report::write_grid(result, dir, hash, cfg.seed);
        std::cout << (dir / "appendix_grid.csv").string() << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Epidemic signals from social-media embedding clusters"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "INI configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Override every seed in the configuration");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--region", g.regions, "Region tag (repeatable); replaces run.regions");

    std::optional<report::Stage> stage;
    for (auto s : {report::Stage::ingest, report::Stage::reduce, report::Stage::cluster, report::Stage::features,
                   report::Stage::threshold, report::Stage::forecast, report::Stage::report}) {
        auto* sub = app.add_subcommand(report::stage_name(s), std::string("Run the pipeline through ") +
                                                                  report::stage_name(s));
        sub->callback([&stage, s] { stage = s; });
    }
    auto* synth = app.add_subcommand("synth", "Write a synthetic corpus per region under <out>/synth");
    report::GridOptions grid_opt;
    auto* grid = app.add_subcommand("grid", "Reduction x clustering accuracy grid under <out>/grid");
    grid->add_option("--reductions", grid_opt.reductions)->delimiter(',');
    grid->add_option("--clusterings", grid_opt.clusterings)->delimiter(',');
    auto* ks = grid->add_option("--ks", grid_opt.ks)->delimiter(',');
    auto* taus = grid->add_option("--taus", grid_opt.taus)->delimiter(',');
    grid->add_flag("!--no-silhouette", grid_opt.silhouette, "Skip the silhouette curve");

    CLI11_PARSE(app, argc, argv);

    try {
        if (stage) return run_stage(g, *stage);
        if (synth->parsed()) return run_synth(g);
        if (grid->parsed()) return run_grid(g, grid_opt, ks->count() > 0, taus->count() > 0);
    } catch (const report::StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
