#include "episignal/core/error.hpp"
#include "episignal/forecast.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>

namespace episignal::forecast {

namespace {

constexpr std::array<double, 6> kJitter{0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2};

Matrix kernel_matrix(const Matrix& X, const GpHyper& h) {
    const Eigen::Index n = X.rows();
    const int dim = int(X.cols());
    Matrix K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        K(i, i) = h.signal_var;
        for (Eigen::Index j = 0; j < i; ++j) K(i, j) = K(j, i) = rbf(X.row(i).data(), X.row(j).data(), dim, h);
    }
    return K;
}

// Cholesky of K + noise I, escalating jitter. Returns false when every level fails.
bool factor(const Matrix& K, double noise, Eigen::MatrixXd& L, double& jitter) {
    const Eigen::Index n = K.rows();
    for (double j : kJitter) {
        Eigen::MatrixXd A = K;
        A.diagonal().array() += noise + j;
        Eigen::LLT<Eigen::MatrixXd> llt(A);
        if (llt.info() != Eigen::Success) continue;
        L = llt.matrixL();
        bool ok = true;
        for (Eigen::Index i = 0; i < n && ok; ++i) ok = L(i, i) > 0.0 && std::isfinite(L(i, i));
        if (!ok) continue;
        jitter = j;
        return true;
    }
    return false;
}

using Objective = std::function<double(const std::array<double, 3>&)>;

// Downhill simplex in three dimensions.
std::pair<std::array<double, 3>, double> nelder_mead(const Objective& f, std::array<double, 3> x0, double step,
                                                     int max_evals) {
    using P = std::array<double, 3>;
    std::array<P, 4> s{x0, x0, x0, x0};
    for (int i = 0; i < 3; ++i) s[std::size_t(i + 1)][std::size_t(i)] += step;
    std::array<double, 4> fv{};
    int evals = 0;
    for (std::size_t i = 0; i < 4; ++i, ++evals) fv[i] = f(s[i]);
    auto order = [&]() {
        std::array<std::size_t, 4> idx{0, 1, 2, 3};
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        std::array<P, 4> s2;
        std::array<double, 4> f2{};
        for (std::size_t i = 0; i < 4; ++i) {
            s2[i] = s[idx[i]];
            f2[i] = fv[idx[i]];
        }
        s = s2;
        fv = f2;
    };
    auto lerp = [](const P& a, const P& b, double t) {
        P r;
        for (std::size_t i = 0; i < 3; ++i) r[i] = a[i] + t * (b[i] - a[i]);
        return r;
    };
    while (evals < max_evals) {
        order();
        if (std::fabs(fv[3] - fv[0]) < 1e-10 * (1.0 + std::fabs(fv[0]))) break;
        P c{0, 0, 0};
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t d = 0; d < 3; ++d) c[d] += s[i][d] / 3.0;
        P xr = lerp(c, s[3], -1.0);
        double fr = f(xr);
        ++evals;
        if (fr < fv[0]) {
            P xe = lerp(c, s[3], -2.0);
            double fe = f(xe);
            ++evals;
            if (fe < fr) {
                s[3] = xe;
                fv[3] = fe;
            } else {
                s[3] = xr;
                fv[3] = fr;
            }
        } else if (fr < fv[2]) {
            s[3] = xr;
            fv[3] = fr;
        } else {
            P xc = fr < fv[3] ? lerp(c, xr, 0.5) : lerp(c, s[3], 0.5);
            double fc = f(xc);
            ++evals;
            if (fc < std::min(fr, fv[3])) {
                s[3] = xc;
                fv[3] = fc;
            } else {
                for (std::size_t i = 1; i < 4; ++i) {
                    s[i] = lerp(s[0], s[i], 0.5);
                    fv[i] = f(s[i]);
                    ++evals;
                }
            }
        }
    }
    order();
    return {s[0], fv[0]};
}

GpHyper from_log(const std::array<double, 3>& t, double floor) {
    return {std::exp(t[0]), std::exp(t[1]), std::max(std::exp(t[2]), floor)};
}

}  // namespace

double rbf(const double* a, const double* b, int dim, const GpHyper& h) {
    double s = 0.0;
    for (int c = 0; c < dim; ++c) {
        double d = a[c] - b[c];
        s += d * d;
    }
    return h.signal_var * std::exp(-s / (2.0 * h.lengthscale * h.lengthscale));
}

double gp_nlml(const Matrix& X, const Vector& y, const GpHyper& h) {
    Matrix K = kernel_matrix(X, h);
    Eigen::MatrixXd L;
    double jitter = 0.0;
    if (!factor(K, h.noise_var, L, jitter)) return std::numeric_limits<double>::infinity();
    Eigen::VectorXd a = L.triangularView<Eigen::Lower>().solve(Eigen::VectorXd(y));
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < L.rows(); ++i) logdet += std::log(L(i, i));
    return 0.5 * a.squaredNorm() + logdet + 0.5 * double(y.size()) * std::log(2.0 * std::numbers::pi);
}

GpModel gp_fit(const Matrix& X, const Vector& y, const GpParams& params) {
    if (X.rows() < 10) throw ValidationError("gp_fit: need at least 10 training rows, got " + std::to_string(X.rows()));
    if (X.rows() != y.size()) throw DimensionError("gp_fit: input rows do not match targets");
    if (!X.allFinite() || !y.allFinite()) throw ValidationError("gp_fit: non-finite training data");

    GpModel model;
    model.X = X;
    model.y_mean = y.mean();
    Vector yc = y.array() - model.y_mean;
    double yvar = yc.squaredNorm() / double(yc.size());
    if (!(yvar > 0.0)) yvar = 1.0;

    if (!params.optimize) {
        model.hyper = params.initial;
        if (!(model.hyper.signal_var > 0.0 && model.hyper.lengthscale > 0.0 && model.hyper.noise_var >= 0.0))
            throw ValidationError("gp_fit: hyperparameters must be positive");
    } else {
        Objective f = [&](const std::array<double, 3>& t) {
            for (double v : t)
                if (!(std::fabs(v) < 30.0)) return std::numeric_limits<double>::infinity();
            return gp_nlml(X, yc, from_log(t, params.noise_floor));
        };
        const double root_dim = std::sqrt(std::max<double>(1.0, double(X.cols())));
        const std::array<double, 4> ells{0.1, 0.3, 1.0, 3.0};
        const std::array<double, 4> noises{1e-4, 1e-3, 1e-2, 1e-1};
        std::array<double, 3> best_t{std::log(yvar), std::log(root_dim), std::log(1e-2 * yvar)};
        double best_f = std::numeric_limits<double>::infinity();
        int started = 0;
        for (double ell : ells)
            for (double nz : noises) {
                if (started++ >= params.restarts) break;
                std::array<double, 3> t0{std::log(yvar), std::log(ell * root_dim),
                                         std::log(std::max(nz * yvar, params.noise_floor))};
                auto [t, fv] = nelder_mead(f, t0, 1.0, params.evals_per_restart);
                if (fv < best_f) {
                    best_f = fv;
                    best_t = t;
                }
            }
        auto [t, fv] = nelder_mead(f, best_t, 0.25, 3 * params.evals_per_restart);
        if (fv <= best_f) best_t = t;
        model.hyper = from_log(best_t, params.noise_floor);
    }

    return gp_condition(X, y, model.hyper);
}

GpModel gp_condition(const Matrix& X, const Vector& y, const GpHyper& hyper) {
    if (X.rows() == 0 || X.rows() != y.size()) throw DimensionError("gp_condition: input rows do not match targets");
    GpModel model;
    model.hyper = hyper;
    model.X = X;
    model.y_mean = y.mean();
    Vector yc = y.array() - model.y_mean;
    Matrix K = kernel_matrix(X, model.hyper);
    Eigen::MatrixXd L;
    if (!factor(K, model.hyper.noise_var, L, model.jitter))
        throw NumericalError("gp_fit: kernel not positive definite even with 1e-2 jitter");
    model.L = L;
    Eigen::VectorXd a = L.triangularView<Eigen::Lower>().solve(Eigen::VectorXd(yc));
    model.alpha = L.transpose().triangularView<Eigen::Upper>().solve(a);
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < L.rows(); ++i) logdet += std::log(L(i, i));
    model.nlml = 0.5 * a.squaredNorm() + logdet + 0.5 * double(yc.size()) * std::log(2.0 * std::numbers::pi);
    return model;
}

GpPrediction gp_predict(const GpModel& model, const Matrix& Xs) {
    if (Xs.cols() != model.X.cols())
        throw DimensionError("gp_predict: inputs have " + std::to_string(Xs.cols()) + " columns, model has " +
                             std::to_string(model.X.cols()));
    const int dim = int(Xs.cols());
    Eigen::MatrixXd Ks(model.X.rows(), Xs.rows());
    for (Eigen::Index j = 0; j < Xs.rows(); ++j)
        for (Eigen::Index i = 0; i < model.X.rows(); ++i) Ks(i, j) = rbf(model.X.row(i).data(), Xs.row(j).data(), dim, model.hyper);
    GpPrediction out;
    out.mean = (Ks.transpose() * model.alpha).array() + model.y_mean;
    Eigen::MatrixXd V = model.L.triangularView<Eigen::Lower>().solve(Ks);
    out.variance.resize(Xs.rows());
    for (Eigen::Index j = 0; j < Xs.rows(); ++j)
        out.variance(j) = std::max(0.0, model.hyper.signal_var - V.col(j).squaredNorm()) + model.hyper.noise_var;
    return out;
}

ForecastRun run_gp(const ForecastProblem& p, const GpParams& params, int n_draws, std::uint64_t seed) {
    Prepared prep = prepare(p);
    const int last_train = int(days_between(p.target.start, p.train_end));
    const int c = int(prep.cov.cols());
    auto inputs = [&](const std::vector<int>& origins) {
        Matrix X(Eigen::Index(origins.size()), 1 + c);
        for (std::size_t i = 0; i < origins.size(); ++i) {
            const int t = origins[i];
            X(Eigen::Index(i), 0) = params.time_scale * double(t) / double(std::max(1, last_train));
            for (int k = 0; k < c; ++k) X(Eigen::Index(i), 1 + k) = prep.cov(t, k);
        }
        return X;
    };
    Matrix Xtr = inputs(prep.train_origins);
    Vector ytr(Eigen::Index(prep.train_origins.size()));
    for (std::size_t i = 0; i < prep.train_origins.size(); ++i)
        ytr(Eigen::Index(i)) = prep.y[std::size_t(prep.train_origins[i] + p.horizon)];
    GpModel model = gp_fit(Xtr, ytr, params);
    GpPrediction pred = gp_predict(model, inputs(prep.test_origins));

    ForecastRun run;
    run.model = "gp";
    run.region = p.region;
    run.horizon = p.horizon;
    run.seed = seed;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < prep.test_origins.size(); ++i) {
        const int t = prep.test_origins[i];
        ForecastPoint pt;
        pt.origin = add_days(p.target.start, t);
        pt.day = add_days(pt.origin, p.horizon);
        pt.actual = prep.y[std::size_t(t + p.horizon)];
        pt.mean = pred.mean(Eigen::Index(i));
        const double sd = std::sqrt(pred.variance(Eigen::Index(i)));
        pt.draws.resize(std::size_t(std::max(1, n_draws)));
        for (auto& d : pt.draws) d = pt.mean + sd * normal(rng);
        run.points.push_back(std::move(pt));
    }
    run.rmse = run_rmse(run);
    return run;
}

}  // namespace episignal::forecast
