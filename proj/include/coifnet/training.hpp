#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coifnet/autodiff.hpp"
#include "coifnet/dataset.hpp"
#include "coifnet/masking.hpp"
#include "coifnet/model.hpp"

namespace coifnet {

// ----------------------------------------------------------------------------
// Losses and metrics

struct MaskedError {
    double value = 0.0;
    double observed = 0.0;   // sum of the mask
    bool degenerate = false; // mask sums to zero; value is 0 by convention
};

MaskedError masked_mae(const Tensor& pred, const Tensor& target, const Tensor& mask);
MaskedError masked_mse(const Tensor& pred, const Tensor& target, const Tensor& mask);

// Differentiable masked MAE; a zero mask yields a constant 0 and sets `degenerate`.
ad::Var masked_mae(const ad::Var& pred, const Tensor& target, const Tensor& mask, bool* degenerate = nullptr);

struct LossTerms {
    ad::Var total;
    double imputation = 0.0;
    double forecast = 0.0;
};

// (1 - lambda) * MAE(Xhat, X; Mx) + lambda * MAE(Yhat, Y; My). An unbound `xhat`
// (forecast-only head) leaves the plain forecast MAE.
LossTerms coifnet_loss(const ad::Var& xhat, const Tensor& X, const Tensor& Mx, const ad::Var& yhat, const Tensor& Y,
                       const Tensor& My, double lambda);

// ----------------------------------------------------------------------------
// Optimizer

struct AdamState {
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
    std::uint64_t step = 0;

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

// One bias-corrected Adam update over every tensor in name order; increments
// state.step first, so the first call uses t = 1.
void adam_step(CoifNetParams& params, const std::map<std::string, Tensor>& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps);

// ----------------------------------------------------------------------------
// Experiment data

// `input` carries the applied missingness; `target` is the reference series the
// forecasts are scored against (equal to `input` when no reference exists).
struct SplitData {
    SeriesDataset input;
    SeriesDataset target;
};

struct ExperimentData {
    SplitData train;
    SplitData val;
    SplitData test;
    std::optional<Standardizer> scaler;
};

// Applies `mask` to `raw`, splits chronologically and (optionally) standardizes
// every split with statistics of the observed training entries.
ExperimentData prepare_experiment(const SeriesDataset& raw, const Mask& mask, const SplitSpec& split,
                                  std::size_t window_length, bool standardize);
// General form: `input` already carries its missingness. A non-null `fixed`
// scaler is applied instead of fitting one.
ExperimentData prepare_experiment(const SeriesDataset& input, const SeriesDataset& target, const SplitSpec& split,
                                  std::size_t window_length, bool standardize, const Standardizer* fixed = nullptr);

// ----------------------------------------------------------------------------
// Training

struct TrainConfig {
    double lambda = 0.2;
    double lr = 1e-3;
    std::size_t batch_size = 512;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    std::uint64_t seed = 0;
    std::string optimizer = "adam";
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 0.0;  // 0 disables global-norm clipping
    std::size_t stride = 1;
    std::size_t eval_batch_size = 256;

    void validate() const;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EvalMetrics {
    double mae = 0.0;
    double mse = 0.0;
    double observed = 0.0;
    // Imputation error of Xhat on entries observed in the target but hidden in the input.
    double imputation_mae = 0.0;
    double imputation_count = 0.0;
    std::size_t windows = 0;
};

// Pooled masked metrics of Yhat against `split.target` over all windows.
EvalMetrics evaluate(const CoifNetParams& params, const ModelConfig& cfg, const SplitData& split,
                     std::size_t batch_size = 256, std::size_t stride = 1);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_mae = 0.0;
    double val_mse = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_mae = 0.0;
    EvalMetrics test;
    double wall_clock_seconds = 0.0;
    std::size_t parameter_count = 0;
    bool stopped_early = false;
};

struct TrainResult {
    CoifNetParams params;  // best-validation parameters
    TrainReport report;
    // Optimizer and RNG state at the end of the best epoch.
    AdamState adam;
    std::size_t epoch = 0;
    std::array<std::uint64_t, 4> shuffle_rng{};
    std::array<std::uint64_t, 4> dropout_rng{};
};

// Tracks the best validation MAE; stops after `patience` epochs without a
// strict improvement.
struct EarlyStopping {
    std::size_t patience = 10;
    double best = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    // True when `val_mae` is a new best.
    bool update(double val_mae);
    bool should_stop() const { return since_best >= patience; }
};

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const ExperimentData& data);

// ----------------------------------------------------------------------------
// Two-stage baseline: training-mean imputation followed by a per-variate ridge
// map from the L lookback values (plus an unpenalized intercept) to the H targets.

struct RidgeForecaster {
    std::size_t lookback = 0;
    std::size_t horizon = 0;
    std::vector<double> fill;               // per-variate imputation value
    std::vector<std::vector<double>> coef;  // per variate, (L + 1) x H row-major; last row is the intercept

    // Forecast for the window starting at `start` of `input` (missing entries mean-filled).
    std::vector<double> predict(const SeriesDataset& input, std::size_t start, std::size_t variate) const;
};

RidgeForecaster fit_ridge_baseline(const SeriesDataset& train_input, std::size_t lookback, std::size_t horizon,
                                   double ridge_penalty, std::size_t stride = 1);

EvalMetrics evaluate_baseline(const RidgeForecaster& model, const SplitData& split, std::size_t stride = 1);

EvalMetrics baseline_two_stage(const ExperimentData& data, std::size_t lookback, std::size_t horizon,
                               double ridge_penalty = 1e-3, std::size_t stride = 1);

// ----------------------------------------------------------------------------
// Lambda sweep

struct SweepRow {
    double lambda = 0.0;
    double mae = 0.0;
    double mse = 0.0;
    std::size_t best_epoch = 0;
};

std::vector<SweepRow> lambda_sweep(const std::vector<double>& lambdas, const ModelConfig& model_cfg,
                                   const TrainConfig& train_cfg, const ExperimentData& data);
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace coifnet
