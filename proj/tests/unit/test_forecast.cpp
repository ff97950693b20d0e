#include "episignal/core/error.hpp"
#include "episignal/forecast.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

using namespace episignal;
using namespace episignal::forecast;

namespace {

ingest::DailySeries series(std::vector<double> v) { return {"WA", "s", parse_date("2020-03-01"), std::move(v)}; }

TransformerParams small_hp() {
    TransformerParams hp;
    hp.d_model = 16;
    hp.n_heads = 2;
    hp.n_layers = 2;
    hp.d_ff = 32;
    hp.context_len = 10;
    hp.seed = 4;
    return hp;
}

std::vector<Matrix> random_windows(int n, int len, int d_in, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<Matrix> w;
    for (int i = 0; i < n; ++i) {
        Matrix m(len, d_in);
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = g(rng);
        w.push_back(m);
    }
    return w;
}

}  // namespace

TEST_SUITE("forecast") {

TEST_CASE("difference: constant, cumulative, round trip") {
    CHECK(difference(series({3, 3, 3, 3})).values == std::vector<double>{0, 0, 0});
    auto d = difference(series({0, 1, 3, 6}));
    CHECK(d.values == std::vector<double>{1, 2, 3});
    CHECK(d.start == parse_date("2020-03-02"));

    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 10.0);
    std::vector<double> v;
    for (int i = 0; i < 200; ++i) v.push_back(g(rng));
    auto s = series(v);
    auto back = undifference(difference(s), v[0]);
    REQUIRE(back.values.size() == v.size());
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::fabs(back.values[i] - v[i]) < 1e-12);
    CHECK(back.start == s.start);
    CHECK_THROWS(difference(series({1})));
}

TEST_CASE("minmax: formula, inverse, constant column") {
    Matrix tr(2, 2), te(1, 2);
    tr << 0, 5, 10, 5;
    te << 20, 5;
    auto r = minmax_fit_apply(tr, te);
    CHECK(r.train(0, 0) == 0.0);
    CHECK(r.train(1, 0) == 1.0);
    CHECK(r.test(0, 0) == 2.0);
    CHECK(r.train(0, 1) == 0.5);
    CHECK(r.test(0, 1) == 0.5);
    CHECK(r.warnings.size() == 1);
    CHECK(r.params.constant_columns == std::vector<int>{1});

    Matrix X = Matrix::Random(30, 4) * 50.0;
    auto mm = minmax_fit(X);
    CHECK((mm.invert(mm.apply(X)) - X).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::fabs(mm.invert(mm.apply(17.25, 2), 2) - 17.25) < 1e-12);
}

TEST_CASE("martingale: lag, flat, random walk") {
    auto s = series({1, 4, 9, 16, 25, 36, 49, 64, 81, 100});
    auto f = martingale_forecast(s, 7);
    CHECK(f.start == add_days(s.start, 7));
    CHECK(f.values == std::vector<double>{1, 4, 9});

    auto flat = martingale_forecast(series(std::vector<double>(30, 2.0)), 7);
    for (double v : flat.values) CHECK(v == 2.0);

    std::mt19937_64 rng(8);
    const double sigma = 1.5;
    std::normal_distribution<double> g(0.0, sigma);
    std::vector<double> walk{0.0};
    for (int i = 1; i < 5007; ++i) walk.push_back(walk.back() + g(rng));
    auto rw = series(walk);
    auto pred = martingale_forecast(rw, 7);
    double se = 0.0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) se += std::pow(pred.values[i] - walk[i + 7], 2);
    const double rmse = std::sqrt(se / double(pred.values.size()));
    CHECK(std::fabs(rmse / std::sqrt(7.0 * sigma * sigma) - 1.0) < 0.10);
}

TEST_CASE("martingale run ignores covariates") {
    auto p = fixture::planted_shift(2);
    auto a = run_martingale(p, 5);
    auto b = run_martingale(fixture::without_covariates(p), 5);
    CHECK(a.rmse == b.rmse);
    REQUIRE(a.points.size() == b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) CHECK(a.points[i].mean == b.points[i].mean);
    for (const auto& pt : a.points) CHECK(pt.draws.size() == 5);
}

TEST_CASE("gp: noise-free sine interpolates its training points") {
    Matrix X(25, 1);
    Vector y(25);
    for (int i = 0; i < 25; ++i) {
        X(i, 0) = 0.25 * i;
        y(i) = std::sin(X(i, 0));
    }
    GpParams p;
    p.optimize = false;
    p.initial = {1.0, 1.0, 1e-8};
    auto m = gp_fit(X, y, p);
    auto pr = gp_predict(m, X);
    CHECK((pr.mean - y).cwiseAbs().maxCoeff() < 1e-4);

    auto exact = gp_condition(X, y, {1.0, 1.0, 0.0});
    auto at = gp_predict(exact, X.topRows(3));
    for (int i = 0; i < 3; ++i) CHECK(at.variance(i) <= 1e-8);
}

TEST_CASE("gp: five-point mean equals the direct formula") {
    Matrix X(5, 2);
    X << 0.0, 0.1, 0.3, 0.5, 0.7, 0.2, 1.1, 0.9, 1.6, 0.4;
    Vector y(5);
    y << 1.0, -0.5, 2.0, 0.3, 1.2;
    const GpHyper h{1.3, 0.6, 0.05};
    auto m = gp_condition(X, y, h);
    Matrix Xs(3, 2);
    Xs << 0.2, 0.2, 1.0, 0.5, -0.4, 1.2;
    auto pr = gp_predict(m, Xs);

    const double ybar = y.mean();
    Matrix K(5, 5), Ks(5, 3);
    auto k = [&](const RowVector& a, const RowVector& b) {
        return h.signal_var * std::exp(-(a - b).squaredNorm() / (2.0 * h.lengthscale * h.lengthscale));
    };
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) K(i, j) = k(X.row(i), X.row(j)) + (i == j ? h.noise_var : 0.0);
        for (int j = 0; j < 3; ++j) Ks(i, j) = k(X.row(i), Xs.row(j));
    }
    const Matrix Kinv = oracle::inverse(K);
    const Vector mean = (Ks.transpose() * Kinv * (y.array() - ybar).matrix()).array() + ybar;
    const Matrix cov = Ks.transpose() * Kinv * Ks;
    for (int j = 0; j < 3; ++j) {
        CHECK(std::fabs(pr.mean(j) - mean(j)) < 1e-8);
        CHECK(std::fabs(pr.variance(j) - (h.signal_var - cov(j, j) + h.noise_var)) < 1e-8);
    }
}

TEST_CASE("gp: variance non-negative and growing away from the data") {
    Matrix X(12, 1);
    Vector y(12);
    for (int i = 0; i < 12; ++i) {
        X(i, 0) = 0.1 * i;
        y(i) = std::cos(3.0 * X(i, 0));
    }
    auto m = gp_condition(X, y, {1.0, 0.3, 1e-3});
    Matrix far(6, 1);
    far << 1.2, 1.4, 1.7, 2.0, 2.5, 4.0;
    auto pr = gp_predict(m, far);
    for (int i = 0; i < 6; ++i) CHECK(pr.variance(i) >= 0.0);
    for (int i = 1; i < 6; ++i) CHECK(pr.variance(i) >= pr.variance(i - 1));
    CHECK_THROWS(gp_fit(X.topRows(5), y.head(5), GpParams{}));
}

TEST_CASE("gp run is deterministic and draws the configured count") {
    auto p = fixture::planted_shift(1, 160);
    GpParams gp;
    gp.restarts = 2;
    gp.evals_per_restart = 15;
    auto a = run_gp(p, gp, 20, 9), b = run_gp(p, gp, 20, 9);
    CHECK(a.rmse == b.rmse);
    for (const auto& pt : a.points) CHECK(pt.draws.size() == 20);
    std::set<Date> days;
    for (const auto& pt : a.points) days.insert(pt.day);
    CHECK(*days.begin() >= p.test.start);
    CHECK(*days.rbegin() <= p.test.end);
}

TEST_CASE("transformer: analytic gradient matches central differences per block") {
    auto hp = small_hp();
    auto m = transformer_init(hp, 3, 4);
    auto windows = random_windows(3, hp.context_len, 3, 1);
    Matrix targets = Matrix::Random(3, 4);
    std::vector<double> grad;
    transformer_loss(m, windows, targets, &grad);
    REQUIRE(grad.size() == m.theta.size());
    const double h = 1e-3;
    for (const auto& b : m.blocks) {
        double diff = 0.0, norm_a = 0.0, norm_n = 0.0;
        for (std::size_t i = b.offset; i < b.offset + b.size(); ++i) {
            auto plus = m, minus = m;
            plus.theta[i] += h;
            minus.theta[i] -= h;
            const double num = (transformer_loss(plus, windows, targets, nullptr) -
                                transformer_loss(minus, windows, targets, nullptr)) / (2.0 * h);
            diff += (num - grad[i]) * (num - grad[i]);
            norm_a += grad[i] * grad[i];
            norm_n += num * num;
        }
        // Key biases shift every score of a query equally, so their true gradient is zero.
        const double rel = std::sqrt(diff) / std::max({std::sqrt(norm_a), std::sqrt(norm_n), 1e-6});
        INFO(b.name);
        CHECK(rel < 1e-4);
    }
}

TEST_CASE("transformer: future inputs do not reach past positions") {
    auto hp = small_hp();
    auto m = transformer_init(hp, 2, 3);
    auto w = random_windows(1, hp.context_len, 2, 5)[0];
    const Matrix base = transformer_hidden(m, w);
    for (int cut = 1; cut < hp.context_len; ++cut) {
        Matrix v = w;
        for (int r = cut; r < hp.context_len; ++r) v.row(r).array() += 3.7 * (r + 1);
        const Matrix moved = transformer_hidden(m, v);
        CHECK(moved.topRows(cut) == base.topRows(cut));
        CHECK(moved.row(cut) != base.row(cut));
    }
}

TEST_CASE("transformer: loss falls by at least 30% over 50 epochs and training is reproducible") {
    auto p = fixture::planted_shift(0, 200);
    auto prep = prepare(p, 28);
    TransformerParams hp;
    hp.epochs = 50;
    std::vector<Matrix> windows;
    Matrix targets(Eigen::Index(prep.train_origins.size()), p.horizon);
    for (std::size_t i = 0; i < prep.train_origins.size(); ++i) {
        const int t = prep.train_origins[i];
        Matrix w(hp.context_len, 1 + prep.cov.cols());
        for (int r = 0; r < hp.context_len; ++r) {
            const int day = t - hp.context_len + 1 + r;
            w(r, 0) = prep.y[std::size_t(day)];
            w.row(r).tail(prep.cov.cols()) = prep.cov.row(day);
        }
        windows.push_back(w);
        for (int h = 0; h < p.horizon; ++h) targets(Eigen::Index(i), h) = prep.y[std::size_t(t + 1 + h)];
    }
    auto m = transformer_init(hp, int(1 + prep.cov.cols()), p.horizon);
    auto twin = m;
    transformer_train(m, windows, targets);
    REQUIRE(m.epoch_loss.size() == 50);
    CHECK(m.epoch_loss.back() <= 0.7 * m.epoch_loss.front());
    for (double v : m.theta) CHECK(std::isfinite(v));
    transformer_train(twin, windows, targets);
    CHECK(twin.theta == m.theta);
}

TEST_CASE("transformer: parameter and data checks") {
    auto hp = small_hp();
    hp.n_heads = 3;
    CHECK_THROWS(hp.validate());
    auto p = fixture::planted_shift(0, 60);
    TransformerParams ok;
    ok.epochs = 1;
    CHECK_THROWS(run_transformer(p, ok, 5));
    ok.context_len = 5;
    auto big = fixture::planted_shift(0);
    CHECK_THROWS(run_transformer(big, ok, 5));
}

TEST_CASE("ablation: set parsing and counting") {
    auto sets = standard_sets();
    CHECK(sets.size() == 8);
    CHECK(sets.front().label == "uni");
    CHECK(parse_set("+T_RoB+M").groups == std::vector<std::string>{"T_RoB", "M"});
    CHECK_THROWS(parse_set("+Q"));

    auto base = fixture::planted_shift(3, 200);
    AblationInput in;
    in.region = "X";
    in.target = base.target;
    in.train_end = base.train_end;
    in.test = base.test;
    in.horizons = {7, 14};
    auto grp = base.covariates;
    in.groups["T_RoB"] = grp;
    grp.names = {"noise_m"};
    grp.X = Matrix::Random(grp.X.rows(), 1);
    in.groups["M"] = grp;
    grp.names = {"noise_g"};
    grp.X = Matrix::Random(grp.X.rows(), 1);
    in.groups["G"] = grp;

    AblationConfig cfg;
    cfg.models = {"martingale"};
    cfg.n_draws = 10;
    auto only = ablation_run(in, {parse_set("uni")}, cfg);
    CHECK(only.size() == 2);

    auto marts = ablation_run(in, sets, cfg);
    CHECK(marts.size() == 16);
    std::set<double> rmse7;
    for (const auto& r : marts)
        if (r.horizon == 7) rmse7.insert(r.rmse);
    CHECK(rmse7.size() == 1);

    cfg.models = {"martingale", "gp"};
    cfg.gp.restarts = 1;
    cfg.gp.evals_per_restart = 10;
    auto grid = ablation_run(in, {parse_set("uni"), parse_set("+T_RoB"), parse_set("+M+G")}, cfg);
    auto again = ablation_run(in, {parse_set("uni"), parse_set("+T_RoB"), parse_set("+M+G")}, cfg);
    REQUIRE(grid.size() == again.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        CHECK(grid[i].rmse == again[i].rmse);
        CHECK(grid[i].model == again[i].model);
        CHECK(grid[i].set == again[i].set);
    }

    auto cov = select_covariates(in, parse_set("+T_RoB+M+G"), 7);
    CHECK(cov.names.front() == "lead");
    CHECK(select_covariates(in, parse_set("uni"), 7).width() == 0);
}

}  // TEST_SUITE
