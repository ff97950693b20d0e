#include "episignal/stats.hpp"

#include "episignal/core/error.hpp"

#include <cmath>

namespace episignal::stats {

double rmse(std::span<const double> pred, std::span<const double> actual) {
    if (pred.size() != actual.size())
        throw DimensionError("rmse: length mismatch (" + std::to_string(pred.size()) + " vs " +
                             std::to_string(actual.size()) + ")");
    if (pred.empty()) throw ValidationError("rmse: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double e = pred[i] - actual[i];
        acc += e * e;
    }
    return std::sqrt(acc / double(pred.size()));
}

double erf_approx(double x) {
    if (x == 0.0) return 0.0;
    const double sign = x < 0 ? -1.0 : 1.0;
    x = std::fabs(x);
    constexpr double p = 0.3275911;
    constexpr double a1 = 0.254829592, a2 = -0.284496736, a3 = 1.421413741, a4 = -1.453152027,
                     a5 = 1.061405429;
    const double t = 1.0 / (1.0 + p * x);
    const double poly = ((((a5 * t + a4) * t + a3) * t + a2) * t + a1) * t;
    return sign * (1.0 - poly * std::exp(-x * x));
}

double normal_cdf(double z) { return 0.5 * (1.0 + erf_approx(z / std::sqrt(2.0))); }

ErrorDistribution ErrorDistribution::from_samples(std::vector<double> samples) {
    ErrorDistribution d;
    d.samples = std::move(samples);
    if (d.samples.empty()) return d;
    double sum = 0.0;
    for (double v : d.samples) sum += v;
    d.mean = sum / double(d.samples.size());
    double ss = 0.0;
    for (double v : d.samples) ss += (v - d.mean) * (v - d.mean);
    d.variance = ss / double(d.samples.size());
    return d;
}

std::string stars_for(double p) {
    if (p < 0.01) return "‡";
    if (p < 0.05) return "†";
    if (p < 0.2) return "*";
    return "";
}

Moments Moments::of(const ErrorDistribution& d) { return {d.mean, d.variance, d.samples.size()}; }

Moments Moments::pool(std::span<const Moments> parts) {
    Moments out;
    double sum = 0.0;
    double sq = 0.0;
    for (const auto& m : parts) {
        out.n += m.n;
        sum += m.mean * double(m.n);
        sq += (m.variance + m.mean * m.mean) * double(m.n);
    }
    if (out.n == 0) return out;
    out.mean = sum / double(out.n);
    out.variance = std::max(0.0, sq / double(out.n) - out.mean * out.mean);
    return out;
}

SignificanceReport z_test(const Moments& pop, const Moments& sample, ZMode mode) {
    if (pop.n < 2 || sample.n < 2) throw ValidationError("z_test: each distribution needs at least 2 samples");
    double denom2 = 0.0;
    if (mode == ZMode::summed_variance)
        denom2 = pop.variance + sample.variance;
    else
        denom2 = pop.variance / double(pop.n) + sample.variance / double(sample.n);
    if (!(denom2 > 0.0)) throw NumericalError("z_test: zero combined variance");

    SignificanceReport r;
    r.z = (pop.mean - sample.mean) / std::sqrt(denom2);
    r.p = 1.0 - normal_cdf(r.z);
    r.stars = stars_for(r.p);
    return r;
}

SignificanceReport z_test(const ErrorDistribution& pop, const ErrorDistribution& sample, ZMode mode) {
    return z_test(Moments::of(pop), Moments::of(sample), mode);
}

ErrorDistribution build_error_distribution(std::span<const DayDraws> days, std::size_t total,
                                           bool signed_errors) {
    if (days.empty()) throw ValidationError("error distribution: no forecast days");
    for (const auto& d : days)
        if (d.draws.empty()) throw ValidationError("error distribution: a forecast day has no draws");

    std::vector<double> samples;
    samples.reserve(total);
    const std::size_t base = total / days.size();
    const std::size_t extra = total % days.size();
    for (std::size_t i = 0; i < days.size(); ++i) {
        const auto& d = days[i];
        std::size_t want = base + (i < extra ? 1 : 0);
        for (std::size_t k = 0; k < want; ++k) {
            double e = d.draws[k % d.draws.size()] - d.actual;
            samples.push_back(signed_errors ? e : std::fabs(e));
        }
    }
    return ErrorDistribution::from_samples(std::move(samples));
}

}  // namespace episignal::stats
