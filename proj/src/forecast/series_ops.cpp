#include "episignal/core/error.hpp"
#include "episignal/forecast.hpp"
#include "episignal/stats.hpp"

#include <cmath>

namespace episignal::forecast {

ingest::DailySeries difference(const ingest::DailySeries& s) {
    if (s.values.size() < 2) throw ValidationError("difference: series '" + s.name + "' needs at least 2 values");
    ingest::DailySeries out{s.region, s.name, add_days(s.start, 1), {}};
    out.values.reserve(s.values.size() - 1);
    for (std::size_t t = 1; t < s.values.size(); ++t) out.values.push_back(s.values[t] - s.values[t - 1]);
    return out;
}

ingest::DailySeries undifference(const ingest::DailySeries& d, double first) {
    ingest::DailySeries out{d.region, d.name, add_days(d.start, -1), {first}};
    double acc = first;
    for (double v : d.values) out.values.push_back(acc += v);
    return out;
}

Matrix MinMax::apply(const Matrix& X) const {
    if (X.cols() != lo.size()) throw DimensionError("minmax apply: column count mismatch");
    Matrix out(X.rows(), X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c)
        for (Eigen::Index r = 0; r < X.rows(); ++r) out(r, c) = apply(X(r, c), int(c));
    return out;
}

Matrix MinMax::invert(const Matrix& X) const {
    if (X.cols() != lo.size()) throw DimensionError("minmax invert: column count mismatch");
    Matrix out(X.rows(), X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c)
        for (Eigen::Index r = 0; r < X.rows(); ++r) out(r, c) = invert(X(r, c), int(c));
    return out;
}

double MinMax::apply(double v, int col) const {
    const double span = hi(col) - lo(col);
    if (!(span > 0.0)) return 0.5;
    return (v - lo(col)) / span;
}

double MinMax::invert(double v, int col) const {
    const double span = hi(col) - lo(col);
    if (!(span > 0.0)) return lo(col);
    return lo(col) + v * span;
}

MinMax minmax_fit(const Matrix& train, std::vector<std::string>* warnings) {
    if (train.rows() < 1) throw ValidationError("minmax_fit: empty training matrix");
    MinMax mm;
    mm.lo = train.colwise().minCoeff();
    mm.hi = train.colwise().maxCoeff();
    for (Eigen::Index c = 0; c < train.cols(); ++c) {
        if (mm.hi(c) > mm.lo(c)) continue;
        mm.constant_columns.push_back(int(c));
        if (warnings) warnings->push_back("minmax: column " + std::to_string(c) + " is constant on the training rows; scaled to 0.5");
    }
    return mm;
}

MinMaxResult minmax_fit_apply(const Matrix& train, const Matrix& test) {
    MinMaxResult r;
    r.params = minmax_fit(train, &r.warnings);
    r.train = r.params.apply(train);
    r.test = r.params.apply(test);
    return r;
}

ingest::DailySeries martingale_forecast(const ingest::DailySeries& mu, int T) {
    if (T < 1) throw ValidationError("martingale_forecast: T must be >= 1");
    ingest::DailySeries out{mu.region, mu.name, add_days(mu.start, T), {}};
    if (mu.values.size() > std::size_t(T)) out.values.assign(mu.values.begin(), mu.values.end() - T);
    return out;
}

void ForecastProblem::validate() const {
    if (horizon < 1) throw ValidationError("forecast: horizon must be >= 1");
    if (context_len < 1) throw ValidationError("forecast: context_len must be >= 1");
    if (target.values.empty()) throw ValidationError("forecast: empty target");
    if (target.has_gaps()) throw ValidationError("forecast: target '" + target.name + "' has gaps");
    if (!(train_end < test.start)) throw ValidationError("forecast: training range must end before the test range");
    if (test.end < test.start) throw ValidationError("forecast: empty test range");
    if (train_end < target.start || target.end() < test.end)
        throw CoverageError("forecast: target " + format_date(target.start) + ".." + format_date(target.end()) +
                            " does not cover " + format_date(train_end) + ".." + format_date(test.end));
    if (covariates.width() > 0) {
        if (covariates.start != target.start || covariates.days() != target.values.size())
            throw DimensionError("forecast: covariates must span the same days as the target");
        covariates.validate();
    }
}

Prepared prepare(const ForecastProblem& p, int min_history) {
    p.validate();
    const int n = int(p.target.values.size());
    const int last_train = int(days_between(p.target.start, p.train_end));
    const int test_lo = int(days_between(p.target.start, p.test.start));
    const int test_hi = int(days_between(p.target.start, p.test.end));
    Prepared out;

    Matrix ytrain(last_train + 1, 1);
    for (int t = 0; t <= last_train; ++t) ytrain(t, 0) = p.target.values[std::size_t(t)];
    out.y_scale = minmax_fit(ytrain, &out.warnings);
    out.y.resize(std::size_t(n));
    for (int t = 0; t < n; ++t) out.y[std::size_t(t)] = out.y_scale.apply(p.target.values[std::size_t(t)]);

    if (p.covariates.width() > 0) {
        MinMax cs = minmax_fit(p.covariates.X.topRows(last_train + 1), &out.warnings);
        out.cov = cs.apply(p.covariates.X);
    } else {
        out.cov = Matrix(n, 0);
    }

    for (int t = std::max(0, min_history); t + p.horizon <= last_train; ++t) out.train_origins.push_back(t);
    for (int t = std::max(0, std::max(min_history, test_lo - p.horizon)); t + p.horizon <= test_hi; ++t)
        out.test_origins.push_back(t);
    if (out.test_origins.empty()) throw CoverageError("forecast: no test origins for horizon " + std::to_string(p.horizon));
    return out;
}

double run_rmse(const ForecastRun& run) {
    std::vector<double> pred, actual;
    for (const auto& pt : run.points) {
        pred.push_back(pt.mean);
        actual.push_back(pt.actual);
    }
    return stats::rmse(pred, actual);
}

ForecastRun run_martingale(const ForecastProblem& p, int n_draws) {
    Prepared prep = prepare(p);
    ForecastRun run;
    run.model = "martingale";
    run.region = p.region;
    run.horizon = p.horizon;
    const double zero = prep.y_scale.apply(0.0);
    for (int t : prep.test_origins) {
        ForecastPoint pt;
        pt.origin = add_days(p.target.start, t);
        pt.day = add_days(pt.origin, p.horizon);
        pt.actual = prep.y[std::size_t(t + p.horizon)];
        pt.mean = zero;
        pt.draws.assign(std::size_t(std::max(1, n_draws)), zero);
        run.points.push_back(std::move(pt));
    }
    run.rmse = run_rmse(run);
    return run;
}

}  // namespace episignal::forecast
