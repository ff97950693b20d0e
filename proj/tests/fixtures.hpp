#pragma once

// Problem builders shared by the unit and acceptance tests.

#include "episignal/cluster.hpp"
#include "episignal/features.hpp"
#include "episignal/forecast.hpp"
#include "episignal/report.hpp"

#include <random>
#include <string>
#include <vector>

namespace fixture {

using namespace episignal;

/// Two 30-point blobs plus five far outliers.
inline Matrix planted_blobs(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 0.3);
    std::uniform_real_distribution<double> u(-40.0, 40.0);
    Matrix X(65, 2);
    for (int i = 0; i < 30; ++i) X.row(i) << n(rng), n(rng);
    for (int i = 30; i < 60; ++i) X.row(i) << 10.0 + n(rng), n(rng);
    for (int i = 60; i < 65; ++i) {
        double x = 0, y = 0;
        do {
            x = u(rng);
            y = u(rng);
        } while (std::hypot(x, y) < 25.0 || std::hypot(x - 10.0, y) < 25.0);
        X.row(i) << x, y;
    }
    return X;
}

/// Stability recomputed from the condensed tree's raw records: points that fall out directly
/// contribute (lambda - birth); members of each child leave at the child's birth lambda.
inline double ledger_stability(const cluster::ClusterModel& m, int node) {
    const auto& c = m.tree[std::size_t(node)];
    double s = 0.0;
    for (auto [p, lam] : c.points) s += lam - c.lambda_birth;
    for (int ch : c.children) {
        const auto& child = m.tree[std::size_t(ch)];
        s += double(child.size) * (child.lambda_birth - c.lambda_birth);
    }
    return s;
}

/// AR(1) target whose single covariate is the target seven days ahead.
inline forecast::ForecastProblem planted_shift(std::uint64_t seed, int n = 300) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> y(static_cast<std::size_t>(n + 7));
    double level = 0.0;
    for (auto& v : y) v = level = 0.9 * level + g(rng);
    const Date s0 = parse_date("2020-01-01");
    forecast::ForecastProblem p;
    p.region = "X";
    p.target = {"X", "y", s0, std::vector<double>(y.begin(), y.begin() + n)};
    p.covariates.region = "X";
    p.covariates.start = s0;
    p.covariates.names = {"lead"};
    p.covariates.X.resize(n, 1);
    for (int t = 0; t < n; ++t) p.covariates.X(t, 0) = y[std::size_t(t + 7)];
    p.horizon = 7;
    p.train_end = add_days(s0, n * 4 / 5 - 1);
    p.test = {add_days(s0, n * 4 / 5), add_days(s0, n - 1)};
    return p;
}

inline forecast::ForecastProblem without_covariates(forecast::ForecastProblem p) {
    p.covariates = p.covariates.select(std::vector<std::string>{});
    return p;
}

/// Generator corpus: differenced MA7 caseload against the MA7 count of the leading cluster.
inline forecast::ForecastProblem synth_signal(std::uint64_t seed) {
    report::SynthConfig sc;
    sc.seed = seed;
    const auto d = report::synth_generate(sc);
    const DateRange r{parse_date("2020-03-07"), parse_date("2021-03-01")};
    const auto counts = features::moving_average(features::daily_cluster_counts(d.posts, d.manifest.post_blob, r), 7);
    forecast::ForecastProblem p;
    p.region = "WA";
    p.target = forecast::difference(features::moving_average(d.caseload, 7));
    const std::vector<std::string> lead{"cluster_" + std::to_string(d.manifest.signal_blob)};
    p.covariates = counts.slice({p.target.start, r.end}).select(lead);
    p.horizon = 7;
    p.train_end = parse_date("2020-12-31");
    p.test = {parse_date("2021-01-01"), parse_date("2021-03-01")};
    return p;
}

}  // namespace fixture
