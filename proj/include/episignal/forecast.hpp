#pragma once

#include "episignal/core/date.hpp"
#include "episignal/core/matrix.hpp"
#include "episignal/features.hpp"
#include "episignal/ingest.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace episignal::forecast {

/// out[t] = s[t] - s[t-1]; the result starts one day later.
ingest::DailySeries difference(const ingest::DailySeries& s);
/// Inverse of difference() given the first value of the original series.
ingest::DailySeries undifference(const ingest::DailySeries& d, double first);

struct MinMax {
    RowVector lo;
    RowVector hi;
    std::vector<int> constant_columns;

    Matrix apply(const Matrix& X) const;
    Matrix invert(const Matrix& X) const;
    double apply(double v, int col = 0) const;
    double invert(double v, int col = 0) const;
};

/// Per-column min-max fit. Constant columns map to 0.5 and are reported in `warnings`.
MinMax minmax_fit(const Matrix& train, std::vector<std::string>* warnings = nullptr);

struct MinMaxResult {
    Matrix train;
    Matrix test;
    MinMax params;
    std::vector<std::string> warnings;
};
MinMaxResult minmax_fit_apply(const Matrix& train, const Matrix& test);

/// Persistence forecast: value at t+T is the observation at t. Starts T days after `mu`.
ingest::DailySeries martingale_forecast(const ingest::DailySeries& mu, int T);

struct ForecastProblem {
    std::string region;
    ingest::DailySeries target;           ///< daily increase (already differenced)
    features::FeatureTable covariates;    ///< same start and length as target; may have 0 columns
    int context_len = 28;
    int horizon = 7;
    Date train_end{};
    DateRange test{};

    void validate() const;
};

/// Min-max scaled view of a problem with train/test forecast origins.
struct Prepared {
    std::vector<double> y;  ///< scaled target, one per day
    Matrix cov;             ///< scaled covariates, day x c
    MinMax y_scale;
    std::vector<int> train_origins;  ///< origin t with t + horizon inside the training range
    std::vector<int> test_origins;   ///< origin t with t + horizon inside the test range
    std::vector<std::string> warnings;
};

/// `min_history` origins earlier than this index are skipped (context windows need history).
Prepared prepare(const ForecastProblem& p, int min_history = 0);

struct ForecastPoint {
    Date origin{};
    Date day{};
    double actual = 0.0;
    double mean = 0.0;
    std::vector<double> draws;
};

struct ForecastRun {
    std::string model;
    std::string set;
    std::string region;
    int horizon = 0;
    std::uint64_t seed = 0;
    std::vector<ForecastPoint> points;
    double rmse = 0.0;
};

double run_rmse(const ForecastRun& run);

ForecastRun run_martingale(const ForecastProblem& p, int n_draws = 1);

// Gaussian process ------------------------------------------------------------

struct GpHyper {
    double signal_var = 1.0;
    double lengthscale = 1.0;
    double noise_var = 1e-2;
};

struct GpParams {
    bool optimize = true;
    GpHyper initial;  ///< used as-is when optimize is false
    int restarts = 16;
    int evals_per_restart = 40;
    double noise_floor = 1e-8;
    /// Day-index input spans [0, time_scale] over the training range; covariates span [0, 1].
    double time_scale = 0.1;
};

struct GpModel {
    GpHyper hyper;
    Matrix X;
    Vector alpha;
    Matrix L;  ///< lower Cholesky factor of K + (noise + jitter) I
    double y_mean = 0.0;
    double jitter = 0.0;
    double nlml = 0.0;
};

struct GpPrediction {
    Vector mean;
    Vector variance;  ///< predictive variance of an observation (latent + noise)
};

double rbf(const double* a, const double* b, int dim, const GpHyper& h);
/// Negative log marginal likelihood; +inf when no jitter level makes the kernel PD.
double gp_nlml(const Matrix& X, const Vector& y, const GpHyper& h);
GpModel gp_fit(const Matrix& X, const Vector& y, const GpParams& params);
/// Posterior for fixed hyperparameters; the target is centred on its mean.
GpModel gp_condition(const Matrix& X, const Vector& y, const GpHyper& hyper);
GpPrediction gp_predict(const GpModel& model, const Matrix& Xs);

ForecastRun run_gp(const ForecastProblem& p, const GpParams& params, int n_draws, std::uint64_t seed);

// Transformer -------------------------------------------------------------------

struct TransformerParams {
    int d_model = 32;
    int n_heads = 4;
    int n_layers = 2;
    int d_ff = 64;
    int context_len = 28;
    int epochs = 50;
    int batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    int rows = 0;
    int cols = 0;
    std::size_t size() const { return std::size_t(rows) * std::size_t(cols); }
};

struct TransformerModel {
    TransformerParams hp;
    int d_in = 0;
    int horizon = 0;
    std::vector<double> theta;
    std::vector<ParamBlock> blocks;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    long step = 0;
    std::vector<double> epoch_loss;
    std::vector<double> residuals;  ///< training residuals at the final horizon step
};

/// Random initial weights (Xavier uniform, unit LayerNorm gains).
TransformerModel transformer_init(const TransformerParams& hp, int d_in, int horizon);

/// Windows are context_len x d_in; returns batch x horizon.
Matrix transformer_forward(const TransformerModel& m, const std::vector<Matrix>& windows);
/// Final residual-stream states of one window, one row per position.
Matrix transformer_hidden(const TransformerModel& m, const Matrix& window);
/// Mean squared error over batch and horizon; fills `grad` (same layout as theta) if given.
double transformer_loss(const TransformerModel& m, const std::vector<Matrix>& windows, const Matrix& targets,
                        std::vector<double>* grad);

/// Trains on (window, next-horizon targets) pairs.
void transformer_train(TransformerModel& m, const std::vector<Matrix>& windows, const Matrix& targets);

ForecastRun run_transformer(const ForecastProblem& p, const TransformerParams& hp, int n_draws);

// Ablation ------------------------------------------------------------------------

struct CovariateSet {
    std::string label;               ///< "uni", "+T_RoB", "+M+G", ...
    std::vector<std::string> groups;  ///< group tags the set draws features from
};

/// uni, +T_RoB, +M, +G, +T_RoB+M, +T_RoB+G, +M+G, +T_RoB+M+G
std::vector<CovariateSet> standard_sets();
CovariateSet parse_set(const std::string& label);

struct AblationInput {
    std::string region;
    ingest::DailySeries target;  ///< differenced caseload
    std::map<std::string, features::FeatureTable> groups;
    Date train_end{};
    DateRange test{};
    std::vector<int> horizons{7, 14, 21};
    std::size_t top_features = 25;
};

struct AblationConfig {
    std::vector<std::string> models{"martingale", "gp", "transformer"};
    GpParams gp;
    TransformerParams transformer;
    int n_draws = 500;
    std::uint64_t seed = 0;
};

/// Covariates for one set and horizon: f-regression top features against the target
/// `horizon` days ahead, scored on training origins only.
features::FeatureTable select_covariates(const AblationInput& in, const CovariateSet& set, int horizon);

std::vector<ForecastRun> ablation_run(const AblationInput& in, const std::vector<CovariateSet>& sets,
                                      const AblationConfig& cfg);

}  // namespace episignal::forecast
