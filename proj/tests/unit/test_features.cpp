#include "episignal/core/error.hpp"
#include "episignal/features.hpp"
#include "episignal/report.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <map>
#include <random>
#include <sstream>

using namespace episignal;
using namespace episignal::features;

namespace {

ingest::PostRecord post(const std::string& id, const std::string& day, std::vector<std::string> tokens) {
    return {id, parse_date(day), "WA", std::move(tokens), utc_midnight(parse_date(day))};
}

std::vector<std::string> names_of(int n) {
    std::vector<std::string> v;
    for (int i = 0; i < n; ++i) v.push_back("f" + std::to_string(i));
    return v;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("cluster counts: same day same cluster") {
    std::vector<ingest::PostRecord> posts{post("a", "2020-03-02", {"x"}), post("b", "2020-03-02", {"x"}),
                                          post("c", "2020-03-02", {"x"}), post("d", "2020-03-03", {"x"})};
    std::vector<int> labels{4, 4, 4, -1};
    const DateRange r{parse_date("2020-03-01"), parse_date("2020-03-04")};
    auto t = daily_cluster_counts(posts, labels, r);
    REQUIRE(t.names == std::vector<std::string>{"cluster_4"});
    CHECK(t.X(1, 0) == 3.0);
    CHECK(t.X.col(0).sum() == 3.0);

    std::vector<int> noise(4, -1);
    CHECK(daily_cluster_counts(posts, noise, r).width() == 0);
}

TEST_CASE("cluster counts equal a histogram oracle and sum to cluster sizes") {
    report::SynthConfig sc;
    sc.volume = 0.1;
    auto d = report::synth_generate(sc);
    const DateRange r{sc.start, add_days(sc.start, sc.n_days - 1)};
    const auto& lab = d.manifest.post_blob;
    auto t = daily_cluster_counts(d.posts, lab, r);
    REQUIRE(int(t.width()) == sc.n_clusters);
    Matrix H = Matrix::Zero(r.length(), sc.n_clusters);
    for (std::size_t i = 0; i < d.posts.size(); ++i)
        if (lab[i] >= 0) H(days_between(r.start, d.posts[i].day), lab[i]) += 1.0;
    CHECK(t.X == H);
    for (int c = 0; c < sc.n_clusters; ++c)
        CHECK(t.X.col(c).sum() == double(std::count(lab.begin(), lab.end(), c)));
}

TEST_CASE("moving average") {
    ingest::DailySeries c{"WA", "c", parse_date("2020-03-01"), std::vector<double>(10, 4.5)};
    CHECK(moving_average(c, 7).values == c.values);

    ingest::DailySeries s{"WA", "s", parse_date("2020-03-01"), {0, 7}};
    CHECK(moving_average(s, 7).values[1] == 3.5);

    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 5.0);
    ingest::DailySeries r{"WA", "r", parse_date("2020-03-01"), {}};
    for (int i = 0; i < 30; ++i) r.values.push_back(n(rng));
    auto a = moving_average(r, 7);
    auto o = oracle::moving_average(r.values, 7);
    for (int i = 0; i < 30; ++i) CHECK(std::fabs(a.values[std::size_t(i)] - o[std::size_t(i)]) < 1e-12);

    auto shifted = r;
    for (auto& v : shifted.values) v = 3.0 * v + 2.0;
    auto b = moving_average(shifted, 7);
    for (int i = 0; i < 30; ++i) CHECK(b.values[std::size_t(i)] == doctest::Approx(3.0 * a.values[std::size_t(i)] + 2.0));
}

TEST_CASE("chi2: hand-computed tables") {
    Matrix X(4, 2);
    X << 5, 1, 5, 1, 0, 1, 0, 1;
    std::vector<int> y{1, 1, 0, 0};
    auto r = chi2_select(X, names_of(2), y, 25);
    std::map<std::string, double> score;
    for (const auto& k : r.kept) score[k.name] = k.score;
    CHECK(score["f0"] == 10.0);
    CHECK(score["f1"] == 0.0);
    CHECK(r.kept.front().name == "f0");

    // Unequal priors: y has three positives out of four.
    Matrix Y(4, 1);
    Y << 2, 4, 0, 6;
    std::vector<int> y2{1, 1, 1, 0};
    // Expected 9 and 3 against observed 6 and 6: 1 + 3.
    CHECK(chi2_select(Y, names_of(1), y2, 25).kept[0].score == doctest::Approx(4.0).epsilon(1e-12));

    Matrix N(2, 1);
    N << 1, -1;
    std::vector<int> yn{0, 1};
    CHECK_THROWS(chi2_select(N, names_of(1), yn, 25));
}

TEST_CASE("chi2: six count features against hand-summed class totals") {
    Matrix X(8, 6);
    X << 3, 0, 1, 4, 2, 7,
         5, 1, 0, 4, 2, 6,
         4, 0, 2, 5, 3, 8,
         6, 2, 1, 3, 2, 5,
         0, 3, 1, 4, 5, 1,
         1, 4, 2, 5, 4, 0,
         0, 5, 0, 3, 6, 2,
         1, 2, 1, 4, 4, 1;
    std::vector<int> y{1, 1, 1, 1, 0, 0, 0, 0};
    // Class sums (18, 2), (3, 14), (4, 4), (16, 16), (9, 19), (26, 4) with equal priors.
    const std::vector<double> ref{12.8, 121.0 / 17.0, 0.0, 0.0, 25.0 / 7.0, 242.0 / 15.0};
    auto r = chi2_select(X, names_of(6), y, 6);
    std::map<std::string, double> score;
    for (const auto& k : r.kept) score[k.name] = k.score;
    for (int i = 0; i < 6; ++i) CHECK(score["f" + std::to_string(i)] == doctest::Approx(ref[std::size_t(i)]).epsilon(1e-12));
    CHECK(r.kept[0].name == "f5");
    CHECK(r.kept[1].name == "f0");
    CHECK(r.kept[2].name == "f1");
    CHECK(r.kept[3].name == "f4");
}

TEST_CASE("f-regression: exact, orthogonal, constant") {
    Matrix X(6, 3);
    std::vector<double> y{1, 2, 3, 4, 5, 6};
    for (int i = 0; i < 6; ++i) {
        X(i, 0) = y[std::size_t(i)];
        X(i, 1) = (i == 0 || i == 5) ? 1.0 : (i == 1 || i == 4 ? -1.0 : 0.0);
        X(i, 2) = 7.0;
    }
    auto r = f_regression_select(X, names_of(3), y, 25);
    std::map<std::string, features::ScoredFeature> by;
    for (const auto& k : r.kept) by[k.name] = k;
    CHECK(by["f0"].p_value < 1e-12);
    CHECK(by["f1"].score == doctest::Approx(0.0));
    CHECK(by["f1"].p_value == doctest::Approx(1.0));
    CHECK(by["f2"].score == 0.0);
    CHECK(by["f2"].p_value == 1.0);
    CHECK(r.kept[0].name == "f0");
}

TEST_CASE("f-regression p-values match quadrature of the F tail") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 8; ++trial) {
        Matrix X(20, 1);
        std::vector<double> y(20);
        const double beta = 0.15 * trial;
        for (int i = 0; i < 20; ++i) {
            X(i, 0) = n(rng);
            y[std::size_t(i)] = beta * X(i, 0) + n(rng);
        }
        auto r = f_regression_select(X, names_of(1), y, 1);
        CHECK(std::fabs(r.kept[0].p_value - oracle::f_tail(r.kept[0].score, 18.0)) < 1e-6);
    }
    for (double f : {0.01, 0.5, 1.0, 3.0, 7.5, 20.0}) CHECK(std::fabs(f_survival_1(f, 18.0) - oracle::f_tail(f, 18.0)) < 1e-6);
}

TEST_CASE("f-regression p decreases with |rho|") {
    double last = 2.0;
    for (double f = 0.0; f < 30.0; f += 0.5) {
        const double p = f_survival_1(f, 40.0);
        CHECK(p <= last);
        last = p;
    }
}

TEST_CASE("selection is permutation-equivariant") {
    std::mt19937_64 rng(4);
    std::poisson_distribution<int> pois(4.0);
    Matrix X(40, 6);
    std::vector<int> y(40);
    std::vector<double> yr(40);
    for (int i = 0; i < 40; ++i) {
        y[std::size_t(i)] = i % 2;
        yr[std::size_t(i)] = i * 0.1;
        for (int c = 0; c < 6; ++c) X(i, c) = pois(rng) + (c < 2 ? 3 * (i % 2) + c * i * 0.05 : 0);
    }
    std::vector<int> perm{3, 0, 5, 1, 4, 2};
    Matrix P(40, 6);
    std::vector<std::string> pn;
    for (int c = 0; c < 6; ++c) {
        P.col(c) = X.col(perm[std::size_t(c)]);
        pn.push_back("f" + std::to_string(perm[std::size_t(c)]));
    }
    auto a = chi2_select(X, names_of(6), y, 6), b = chi2_select(P, pn, y, 6);
    auto fa = f_regression_select(X, names_of(6), yr, 6), fb = f_regression_select(P, pn, yr, 6);
    for (int k = 0; k < 6; ++k) {
        CHECK(a.kept[std::size_t(k)].name == b.kept[std::size_t(k)].name);
        CHECK(a.kept[std::size_t(k)].score == b.kept[std::size_t(k)].score);
        CHECK(fa.kept[std::size_t(k)].name == fb.kept[std::size_t(k)].name);
    }
}

TEST_CASE("selection keeps at most top features, ordered by p") {
    std::mt19937_64 rng(7);
    std::poisson_distribution<int> pois(3.0);
    Matrix X(30, 40);
    std::vector<int> y(30);
    for (int i = 0; i < 30; ++i) {
        y[std::size_t(i)] = i % 2;
        for (int c = 0; c < 40; ++c) X(i, c) = pois(rng);
    }
    auto r = chi2_select(X, names_of(40), y);
    CHECK(r.kept.size() == 25);
    for (std::size_t k = 1; k < r.kept.size(); ++k) CHECK(r.kept[k - 1].p_value <= r.kept[k].p_value);
}

TEST_CASE("keyword counts") {
    std::vector<ingest::PostRecord> posts{post("a", "2020-03-01", {"fever", "fever"}),
                                          post("b", "2020-03-02", {"cough", "fever"})};
    const DateRange r{parse_date("2020-03-01"), parse_date("2020-03-02")};
    std::vector<std::string> lex{"fever", "absent"};
    auto t = keyword_counts(posts, lex, r);
    CHECK(t.X(0, 0) == 2.0);
    CHECK(t.X(1, 0) == 1.0);
    CHECK(t.X.col(1).sum() == 0.0);
    CHECK(t.width() == 2);

    report::SynthConfig sc;
    sc.volume = 0.05;
    auto d = report::synth_generate(sc);
    const DateRange full{sc.start, add_days(sc.start, sc.n_days - 1)};
    auto lexicon = d.manifest.vocab[0];
    auto k = keyword_counts(d.posts, lexicon, full);
    Matrix o = Matrix::Zero(full.length(), Eigen::Index(lexicon.size()));
    for (const auto& p : d.posts)
        for (const auto& tok : p.tokens)
            for (std::size_t w = 0; w < lexicon.size(); ++w)
                if (tok == lexicon[w]) o(days_between(full.start, p.day), Eigen::Index(w)) += 1.0;
    CHECK(k.X == o);
}

TEST_CASE("over-represented words") {
    std::vector<ingest::PostRecord> target{post("a", "2020-03-01", {"mask", "virus", "the", "a"}),
                                           post("b", "2020-03-01", {"mask", "virus", "of", "the"}),
                                           post("c", "2020-03-01", {"lockdown", "the", "of", "a"})};
    std::map<std::string, long> bg{{"virus", 2}, {"the", 3}, {"of", 2}, {"a", 2}, {"game", 10}, {"lockdown", 1}};
    auto w = overrepresented_words(target, bg, 10);
    // "mask" (2, only in target) beats "virus" (2, also in background).
    double mask = -1, virus = -1;
    for (const auto& s : w) {
        if (s.word == "mask") mask = s.score;
        if (s.word == "virus") virus = s.score;
    }
    CHECK(mask > virus);
    CHECK(w.front().word == "mask");

    // n = 32, ad - bc = 40, margins 12 * 20 * 2 * 30.
    CHECK(chi2_2x2(2, 10, 0, 20) == doctest::Approx(32.0 / 9.0).epsilon(1e-12));
    CHECK(std::fabs(chi2_2x2(3, 27, 10, 90)) < 1e-9);

    std::vector<ingest::PostRecord> none;
    CHECK_THROWS(overrepresented_words(none, bg, 5));
}

TEST_CASE("feature table csv round-trip") {
    FeatureTable t;
    t.region = "WA";
    t.start = parse_date("2020-03-01");
    t.names = {"a", "b,c"};
    t.X.resize(3, 2);
    t.X << 1.5, 0, 1e-17, 3, 4, 0.1;
    std::ostringstream out;
    write_csv(out, t);
    std::istringstream in(out.str());
    auto back = read_csv(in, "WA");
    CHECK(back.names == t.names);
    CHECK(back.X == t.X);
    CHECK(back.start == t.start);
}

}  // TEST_SUITE
