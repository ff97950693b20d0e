#include "episignal/core/error.hpp"
#include "episignal/stats.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace episignal;
using namespace episignal::stats;

namespace {

ErrorDistribution normal_samples(double mean, double sd, int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(mean, sd);
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(g(rng));
    return ErrorDistribution::from_samples(v);
}

}  // namespace

TEST_SUITE("stats") {

TEST_CASE("rmse") {
    std::vector<double> a{1, 2, 3}, b{3, -4};
    CHECK(rmse(a, a) == 0.0);
    std::vector<double> z{0, 0};
    CHECK(rmse(z, b) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::vector<double> p, q;
    for (int i = 0; i < 100; ++i) {
        p.push_back(u(rng));
        q.push_back(u(rng));
    }
    double s = 0.0;
    for (int i = 0; i < 100; ++i) s += (p[std::size_t(i)] - q[std::size_t(i)]) * (p[std::size_t(i)] - q[std::size_t(i)]);
    CHECK(std::fabs(rmse(p, q) - std::sqrt(s / 100.0)) < 1e-12);

    std::vector<double> one{1};
    CHECK_THROWS(rmse(one, a));
    std::vector<double> none;
    CHECK_THROWS(rmse(none, none));
}

TEST_CASE("normal cdf agrees with the series to the approximation bound") {
    for (double z = -5.0; z <= 5.0; z += 0.125) CHECK(std::fabs(normal_cdf(z) - oracle::normal_cdf(z)) < 1.5e-7);
    for (double x = -3.0; x <= 3.0; x += 0.25) CHECK(std::fabs(erf_approx(x) - std::erf(x)) < 1.5e-7);
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-7));
}

TEST_CASE("z-test: identical, worked example, sign") {
    auto d = normal_samples(1.0, 0.3, 500, 2);
    auto same = z_test(d, d);
    CHECK(same.z == 0.0);
    CHECK(same.p == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(same.stars == "");

    const Moments pop{1.0, 0.04, 1000}, sample{0.5, 0.05, 1000};
    auto r = z_test(pop, sample);
    CHECK(r.z == doctest::Approx(0.5 / std::sqrt(0.09)).epsilon(1e-12));
    CHECK(std::fabs(r.z - 1.6667) < 1e-4);
    CHECK(std::fabs(r.p - (1.0 - oracle::normal_cdf(r.z))) < 1.5e-7);
    CHECK(std::fabs(r.p - 0.0478) < 1e-4);
    CHECK(r.stars == "†");

    auto worse = z_test(sample, pop);
    CHECK(worse.z < 0.0);
    CHECK(worse.stars == "");

    auto se = z_test(pop, sample, ZMode::standard_error);
    CHECK(se.z == doctest::Approx(0.5 / std::sqrt(0.09 / 1000.0)).epsilon(1e-12));
}

TEST_CASE("z-test: antisymmetric and scale invariant") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.1, 3.0);
    for (int trial = 0; trial < 20; ++trial) {
        auto a = normal_samples(u(rng), u(rng), 200, std::uint64_t(trial));
        auto b = normal_samples(u(rng), u(rng), 300, std::uint64_t(100 + trial));
        const double z = z_test(a, b).z;
        CHECK(z_test(b, a).z == doctest::Approx(-z).epsilon(1e-12));
        const double c = u(rng) * 7.0;
        auto scale = [c](ErrorDistribution d) {
            for (auto& v : d.samples) v *= c;
            return ErrorDistribution::from_samples(d.samples);
        };
        CHECK(z_test(scale(a), scale(b)).z == doctest::Approx(z).epsilon(1e-9));
    }
}

TEST_CASE("stars: left-closed boundaries") {
    CHECK(stars_for(0.5) == "");
    CHECK(stars_for(0.2) == "");
    CHECK(stars_for(std::nextafter(0.2, 0.0)) == "*");
    CHECK(stars_for(0.05) == "*");
    CHECK(stars_for(std::nextafter(0.05, 0.0)) == "†");
    CHECK(stars_for(0.01) == "†");
    CHECK(stars_for(std::nextafter(0.01, 0.0)) == "‡");
    CHECK(stars_for(0.0) == "‡");
}

TEST_CASE("moments pool like concatenation") {
    auto a = normal_samples(0.0, 1.0, 37, 1), b = normal_samples(4.0, 2.0, 91, 2);
    std::vector<double> all = a.samples;
    all.insert(all.end(), b.samples.begin(), b.samples.end());
    auto joint = Moments::of(ErrorDistribution::from_samples(all));
    const std::vector<Moments> parts{Moments::of(a), Moments::of(b)};
    auto pooled = Moments::pool(parts);
    CHECK(pooled.n == 128);
    CHECK(pooled.mean == doctest::Approx(joint.mean).epsilon(1e-12));
    CHECK(pooled.variance == doctest::Approx(joint.variance).epsilon(1e-12));
}

TEST_CASE("error distribution: counting and point masses") {
    std::vector<DayDraws> days(2);
    for (int i = 0; i < 5000; ++i) {
        days[0].draws.push_back(1.0 + i);
        days[1].draws.push_back(-1.0 * i);
    }
    CHECK(build_error_distribution(days, 10000).samples.size() == 10000);

    std::vector<DayDraws> point{{3.0, std::vector<double>(4, 5.0)}, {1.0, std::vector<double>(4, 0.0)}};
    auto d = build_error_distribution(point, 7);
    REQUIRE(d.samples.size() == 7);
    for (int i = 0; i < 4; ++i) CHECK(d.samples[std::size_t(i)] == 2.0);
    for (int i = 4; i < 7; ++i) CHECK(d.samples[std::size_t(i)] == 1.0);
    auto s = build_error_distribution(point, 2, true);
    CHECK(s.samples == std::vector<double>{2.0, -1.0});
}

TEST_CASE("error distribution: absolute errors of normal draws follow the folded normal") {
    const double mu = 0.7, sd = 1.3, actual = 0.2;
    std::mt19937_64 rng(10);
    std::normal_distribution<double> g(mu, sd);
    std::vector<DayDraws> one(1);
    one[0].actual = actual;
    for (int i = 0; i < 10000; ++i) one[0].draws.push_back(g(rng));
    auto d = build_error_distribution(one, 10000);
    const double m = mu - actual;
    const double folded = sd * std::sqrt(2.0 / M_PI) * std::exp(-m * m / (2.0 * sd * sd)) +
                          m * (1.0 - 2.0 * oracle::normal_cdf(-m / sd));
    const double folded_var = m * m + sd * sd - folded * folded;
    CHECK(std::fabs(d.mean - folded) <= 3.0 * std::sqrt(folded_var / 10000.0));
}

}  // TEST_SUITE
