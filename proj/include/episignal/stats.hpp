#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace episignal::stats {

double rmse(std::span<const double> pred, std::span<const double> actual);

/// Error function via the Abramowitz-Stegun 7.1.26 rational approximation (|err| < 1.5e-7).
double erf_approx(double x);
/// Standard normal CDF built on erf_approx.
double normal_cdf(double z);

struct ErrorDistribution {
    std::vector<double> samples;
    double mean = 0.0;
    double variance = 0.0;  // population variance of the samples

    static ErrorDistribution from_samples(std::vector<double> samples);
};

enum class ZMode {
    /// Denominator sqrt(var_pop + var_sample), exactly as published for the ablation table.
    summed_variance,
    /// Conventional two-sample statistic sqrt(var_pop/n_pop + var_sample/n_sample).
    standard_error,
};

struct SignificanceReport {
    double z = 0.0;
    double p = 0.5;  // one-sided, improvement direction
    std::string stars;
};

/// Summary of an error distribution; enough for the Z-test and for pooling runs.
struct Moments {
    double mean = 0.0;
    double variance = 0.0;
    std::size_t n = 0;

    static Moments of(const ErrorDistribution& d);
    /// Exact mean and population variance of the concatenated samples.
    static Moments pool(std::span<const Moments> parts);
};

/// "" for p >= .2, "*" for [.05, .2), "†" for [.01, .05), "‡" below .01.
std::string stars_for(double p);

/// The population is the baseline (univariate) error distribution; Z > 0 means the sample's
/// errors are smaller.
SignificanceReport z_test(const ErrorDistribution& pop, const ErrorDistribution& sample,
                          ZMode mode = ZMode::summed_variance);
SignificanceReport z_test(const Moments& pop, const Moments& sample, ZMode mode = ZMode::summed_variance);

/// One day's forecast: the point forecast and its probabilistic draws.
struct DayDraws {
    double actual = 0.0;
    std::vector<double> draws;
};

/// Pools per-draw errors across days into `total` samples, allocated as evenly as possible
/// across days (earlier days take the remainder) and cycling through each day's draws.
ErrorDistribution build_error_distribution(std::span<const DayDraws> days, std::size_t total = 10000,
                                           bool signed_errors = false);

}  // namespace episignal::stats
