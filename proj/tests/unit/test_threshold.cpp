#include "episignal/core/error.hpp"
#include "episignal/report.hpp"
#include "episignal/threshold.hpp"

#include <doctest.h>

#include <functional>
#include <random>
#include <set>

using namespace episignal;
using namespace episignal::threshold;

namespace {

ingest::DailySeries series(std::vector<double> v) { return {"WA", "mu", parse_date("2020-03-01"), std::move(v)}; }

ThresholdDataset random_rows(int n_pos, int n_neg, int width, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    ThresholdDataset d;
    for (int c = 0; c < width; ++c) d.names.push_back("f" + std::to_string(c));
    d.X.resize(n_pos + n_neg, width);
    for (int i = 0; i < n_pos + n_neg; ++i) {
        d.days.push_back(add_days(parse_date("2020-01-01"), i));
        d.y.push_back(i < n_pos ? 1 : 0);
        for (int c = 0; c < width; ++c) d.X(i, c) = g(rng);
    }
    return d;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

}  // namespace

TEST_SUITE("threshold") {

TEST_CASE("label: doubling sits on the boundary, flat is negative") {
    auto mu = series({100, 150, 200});
    auto l = label_days(mu, {2, 1.0});
    REQUIRE(l.days.size() == 1);
    CHECK(l.days[0].delta == 1.0);
    CHECK(l.days[0].label == 1);

    auto flat = series(std::vector<double>(20, 50.0));
    for (double m : {1e-9, 0.2, 1.0}) {
        auto f = label_days(flat, {7, m});
        CHECK(f.days.size() == 13);
        for (const auto& d : f.days) CHECK(d.label == 0);
    }
}

TEST_CASE("label: zero days excluded and counted, tail dropped") {
    auto l = label_days(series({0, 0, 5, 10, 20}), {1, 0.5});
    CHECK(l.zero_days == 2);
    CHECK(l.days.size() == 2);
    CHECK(l.days.back().day == parse_date("2020-03-04"));
    CHECK_THROWS(label_days(series({1, 2}), {7, 0.0}));
}

TEST_CASE("label: logistic caseload matches a per-day loop") {
    std::vector<double> v;
    for (int t = 0; t < 120; ++t) v.push_back(5000.0 / (1.0 + std::exp(-(t - 60) / 8.0)));
    auto l = label_days(series(v), {14, 0.6});
    REQUIRE(l.days.size() == 106);
    for (std::size_t t = 0; t < 106; ++t) {
        const int truth = v[t + 14] / v[t] - 1.0 >= 0.6;
        CHECK(l.days[t].label == truth);
        CHECK(l.days[t].day == add_days(parse_date("2020-03-01"), long(t)));
    }
}

TEST_CASE("make rows keeps only days the table covers") {
    features::FeatureTable t;
    t.start = parse_date("2020-03-03");
    t.names = {"a"};
    t.X = Matrix::Constant(3, 1, 2.0);
    t.X(1, 0) = 9.0;
    auto l = label_days(series({1, 2, 3, 4, 5, 6, 7}), {1, 0.3});
    auto rows = make_rows(t, l);
    CHECK(rows.rows() == 3);
    CHECK(rows.days.front() == parse_date("2020-03-03"));
    CHECK(rows.X(1, 0) == 9.0);
}

TEST_CASE("balance: 60/40 gives 40/40 then 60 train and 20 test") {
    auto rows = random_rows(60, 40, 3, 1);
    auto ds = balance_and_split(rows, 7);
    CHECK(ds.rows() == 80);
    CHECK(std::count(ds.y.begin(), ds.y.end(), 1) == 40);
    CHECK(ds.indices(true).size() == 20);
    CHECK(ds.indices(false).size() == 60);

    auto again = balance_and_split(rows, 7);
    CHECK(again.days == ds.days);
    CHECK(again.test == ds.test);
    CHECK(balance_and_split(rows, 8).days != ds.days);

    CHECK_THROWS(balance_and_split(random_rows(10, 0, 2, 1), 1));
}

TEST_CASE("balance: odd sizes stay within one") {
    for (int n : {11, 17, 23}) {
        auto ds = balance_and_split(random_rows(n, 3 * n, 2, std::uint64_t(n)), 1);
        const long pos = std::count(ds.y.begin(), ds.y.end(), 1);
        CHECK(std::labs(pos - long(ds.rows() - std::size_t(pos))) <= 1);
    }
}

TEST_CASE("balance: majority classifier after a 9:1 imbalance scores about one half") {
    std::vector<double> acc;
    for (std::uint64_t s = 0; s < 50; ++s) {
        auto ds = balance_and_split(random_rows(20, 180, 1, s), s);
        // random_rows puts the 180 negatives in the majority before balancing.
        const int majority = 0;
        const auto te = ds.labels_of(ds.indices(true));
        acc.push_back(double(std::count(te.begin(), te.end(), majority)) / double(te.size()));
    }
    CHECK(std::fabs(mean(acc) - 0.5) <= 0.08);
}

TEST_CASE("forest: separating feature, depth, bootstrap, determinism") {
    ThresholdDataset d = random_rows(30, 30, 3, 2);
    for (int i = 0; i < 60; ++i) d.X(i, 1) = d.y[std::size_t(i)] ? 1.0 + i : -1.0 - i;
    ForestParams p;
    p.n_trees = 20;
    p.max_depth = 3;
    auto f = train_forest(d.X, d.y, d.names, p);
    CHECK(f.predict(d.X) == d.y);
    for (const auto& t : f.trees) {
        CHECK(t.depth() <= 3);
        CHECK(t.bootstrap.size() == 60);
        for (const auto& nd : t.nodes) CHECK(nd.gini_decrease >= 0.0);
    }
    auto g = train_forest(d.X, d.y, d.names, p);
    for (std::size_t t = 0; t < f.trees.size(); ++t) CHECK(f.trees[t].bootstrap == g.trees[t].bootstrap);
    CHECK(g.predict(d.X) == f.predict(d.X));
    CHECK_THROWS(train_forest(d.X.topRows(5), std::span<const int>(d.y).first(5), d.names, p));
}

TEST_CASE("forest: shuffled labels give chance accuracy") {
    std::vector<double> acc;
    for (std::uint64_t s = 0; s < 20; ++s) {
        auto rows = random_rows(60, 60, 5, 100 + s);
        std::mt19937_64 rng(s);
        std::shuffle(rows.y.begin(), rows.y.end(), rng);
        auto ds = balance_and_split(rows, s);
        ForestParams p;
        p.n_trees = 30;
        p.seed = s;
        acc.push_back(evaluate(train_forest(ds, p), ds));
    }
    const double m = mean(acc);
    CHECK(m >= 0.4);
    CHECK(m <= 0.6);
}

TEST_CASE("evaluate: coin flip on 40 balanced rows") {
    auto rows = random_rows(20, 20, 1, 3);
    std::mt19937_64 rng(9);
    for (auto& v : rows.X.col(0)) v = std::bernoulli_distribution(0.5)(rng) ? 1.0 : 0.0;
    rows.test.assign(40, 1);
    // A one-stump "forest" that predicts the coin.
    ForestModel coin;
    coin.names = rows.names;
    Tree t;
    t.nodes = {TreeNode{0, 0.5, 1, 2}, TreeNode{}, TreeNode{}};
    t.nodes[1].value = 0.0;
    t.nodes[2].value = 1.0;
    coin.trees.push_back(t);
    const double acc = evaluate(coin, rows);
    CHECK(std::fabs(acc - 0.5) <= 0.15);
}

TEST_CASE("evaluate: hand-tallied votes, ties go to class 0") {
    // Three stumps on one feature with thresholds 1, 2, 3; a row votes 1 in each tree it exceeds.
    ForestModel f;
    f.names = {"x"};
    for (double th : {1.0, 2.0, 3.0}) {
        Tree t;
        t.nodes = {TreeNode{0, th, 1, 2}, TreeNode{}, TreeNode{}};
        t.nodes[2].value = 1.0;
        f.trees.push_back(t);
    }
    ThresholdDataset d;
    d.names = {"x"};
    d.X.resize(5, 1);
    d.X << 0.5, 1.5, 2.5, 3.5, 2.5;
    // votes for 1: 0, 1, 2, 3, 2 -> predictions 0, 0, 1, 1, 1
    d.y = {0, 0, 1, 1, 0};
    d.test.assign(5, 1);
    CHECK(f.predict(d.X) == std::vector<int>{0, 0, 1, 1, 1});
    CHECK(evaluate(f, d) == doctest::Approx(0.8));

    Tree tie;
    tie.nodes = {TreeNode{}};
    tie.nodes[0].value = 1.0;
    f.trees.push_back(tie);
    // x = 1.5 now has two votes of four.
    CHECK(f.predict(d.X)[1] == 0);
}

TEST_CASE("importance: sums to one, unused features zero, ledger recomputation") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix X(80, 3);
    std::vector<int> y(80);
    for (int i = 0; i < 80; ++i) {
        X(i, 0) = g(rng);
        X(i, 1) = g(rng);
        X(i, 2) = 0.0;
        y[std::size_t(i)] = X(i, 0) + 0.3 * X(i, 1) > 0.0;
    }
    std::vector<std::string> names{"a", "b", "c"};
    ForestParams p;
    p.n_trees = 25;
    auto f = train_forest(X, y, names, p);
    auto imp = feature_importances(f);
    CHECK(std::accumulate(imp.begin(), imp.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(imp[2] == 0.0);
    CHECK(imp[0] > imp[1]);

    // Walk each tree from the root and recompute the weighted decrease from node impurities.
    std::vector<double> ledger(3, 0.0);
    for (const auto& t : f.trees) {
        std::vector<double> per(3, 0.0);
        double total = 0.0;
        const double n_root = t.nodes[0].n_samples;
        std::function<void(int)> walk = [&](int id) {
            const auto& nd = t.nodes[std::size_t(id)];
            if (nd.feature < 0) return;
            const auto& l = t.nodes[std::size_t(nd.left)];
            const auto& r = t.nodes[std::size_t(nd.right)];
            const double dec = (nd.n_samples * nd.impurity - l.n_samples * l.impurity - r.n_samples * r.impurity) / n_root;
            CHECK(dec == doctest::Approx(nd.gini_decrease).epsilon(1e-9));
            per[std::size_t(nd.feature)] += dec;
            total += dec;
            walk(nd.left);
            walk(nd.right);
        };
        walk(0);
        if (total > 0.0)
            for (int c = 0; c < 3; ++c) ledger[std::size_t(c)] += per[std::size_t(c)] / total / double(f.trees.size());
    }
    const double sum = std::accumulate(ledger.begin(), ledger.end(), 0.0);
    for (int c = 0; c < 3; ++c) CHECK(imp[std::size_t(c)] == doctest::Approx(ledger[std::size_t(c)] / sum).epsilon(1e-9));

    auto one = grouped_importance(f, {{"a", "T"}, {"b", "T"}, {"c", "T"}});
    CHECK(one["T"] == doctest::Approx(1.0));
    auto split = grouped_importance(f, {{"a", "T_RoB"}, {"b", "M"}, {"c", "G"}});
    CHECK(split["G"] == 0.0);
    CHECK_THROWS(grouped_importance(f, {{"a", "T"}, {"b", "T"}, {"c", "T"}, {"zzz", "T"}}));
    CHECK_THROWS(grouped_importance(f, {{"a", "T"}}));
}

TEST_CASE("planted generator: m = 0.6, tau = 7 separates") {
    std::vector<double> acc;
    for (std::uint64_t s = 0; s < 3; ++s) {
        report::SynthConfig sc;
        sc.seed = s;
        auto d = report::synth_generate(sc);
        const DateRange r{parse_date("2020-03-07"), parse_date("2021-01-17")};
        auto ft = features::daily_cluster_counts(d.posts, d.manifest.post_blob, r);
        auto lab = label_days(features::moving_average(d.caseload, 7), {7, 0.6});
        auto ds = balance_and_split(make_rows(ft, lab), s);
        ForestParams p;
        p.seed = s;
        acc.push_back(evaluate(train_forest(ds, p), ds));
    }
    std::sort(acc.begin(), acc.end());
    CHECK(acc[1] >= 0.9);
}

}  // TEST_SUITE
