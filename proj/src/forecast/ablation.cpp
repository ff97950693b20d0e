#include "episignal/core/error.hpp"
#include "episignal/forecast.hpp"

#include <sstream>

namespace episignal::forecast {

std::vector<CovariateSet> standard_sets() {
    std::vector<CovariateSet> out;
    for (const char* label : {"uni", "+T_RoB", "+M", "+G", "+T_RoB+M", "+T_RoB+G", "+M+G", "+T_RoB+M+G"})
        out.push_back(parse_set(label));
    return out;
}

CovariateSet parse_set(const std::string& label) {
    CovariateSet s{label, {}};
    if (label == "uni") return s;
    if (label.empty() || label[0] != '+') throw ValidationError("covariate set '" + label + "' must be 'uni' or start with '+'");
    std::stringstream ss(label.substr(1));
    std::string part;
    while (std::getline(ss, part, '+')) {
        if (part.empty()) throw ValidationError("covariate set '" + label + "' has an empty group");
        if (part != "T_RoB" && part != "T_BoW" && part != "M" && part != "G")
            throw ValidationError("covariate set '" + label + "': unknown group '" + part + "'");
        s.groups.push_back(part);
    }
    return s;
}

features::FeatureTable select_covariates(const AblationInput& in, const CovariateSet& set, int horizon) {
    const DateRange range{in.target.start, in.target.end()};
    features::FeatureTable empty{in.region, in.target.start, {}, Matrix(Eigen::Index(in.target.values.size()), 0)};
    if (set.groups.empty()) return empty;
    std::vector<features::FeatureTable> parts;
    for (const auto& g : set.groups) {
        auto it = in.groups.find(g);
        if (it == in.groups.end()) throw ValidationError("covariate set '" + set.label + "': no features for group '" + g + "'");
        parts.push_back(it->second.slice(range));
    }
    features::FeatureTable all = features::concat(parts);
    if (all.width() == 0) return empty;

    const long last_train = days_between(in.target.start, in.train_end);
    const long rows = last_train - horizon + 1;
    if (rows < 3) throw CoverageError("select_covariates: too few training origins for horizon " + std::to_string(horizon));
    Matrix X = all.X.topRows(rows);
    std::vector<double> y;
    for (long t = 0; t < rows; ++t) y.push_back(in.target.values[std::size_t(t + horizon)]);
    auto sel = features::f_regression_select(X, all.names, y, in.top_features);
    auto names = sel.names();
    return all.select(names);
}

std::vector<ForecastRun> ablation_run(const AblationInput& in, const std::vector<CovariateSet>& sets,
                                      const AblationConfig& cfg) {
    std::vector<ForecastRun> runs;
    for (int h : in.horizons) {
        ForecastProblem base;
        base.region = in.region;
        base.target = in.target;
        base.context_len = cfg.transformer.context_len;
        base.horizon = h;
        base.train_end = in.train_end;
        base.test = in.test;
        std::optional<ForecastRun> martingale;
        for (const auto& model : cfg.models) {
            for (const auto& set : sets) {
                auto label = [&] { return model + "/" + set.label + "/T=" + std::to_string(h); };
                try {
                    ForecastRun run;
                    if (model == "martingale") {
                        if (!martingale) martingale = run_martingale(base, cfg.n_draws);
                        run = *martingale;
                    } else {
                        ForecastProblem p = base;
                        p.covariates = select_covariates(in, set, h);
                        if (model == "gp") {
                            run = run_gp(p, cfg.gp, cfg.n_draws, cfg.seed);
                        } else if (model == "transformer") {
                            TransformerParams hp = cfg.transformer;
                            hp.seed = cfg.seed;
                            run = run_transformer(p, hp, cfg.n_draws);
                        } else {
                            throw ValidationError("unknown model '" + model + "'");
                        }
                    }
                    run.set = set.label;
                    run.seed = cfg.seed;
                    runs.push_back(std::move(run));
                } catch (const Error& e) {
                    throw Error("ablation " + in.region + " " + label() + ": " + e.what());
                }
            }
        }
    }
    return runs;
}

}  // namespace episignal::forecast
