#include "coifnet/training.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <sstream>

#include "coifnet/errors.hpp"

namespace coifnet {

// ----------------------------------------------------------------------------
// Losses and metrics

namespace {

MaskedError masked_error(const Tensor& pred, const Tensor& target, const Tensor& mask, bool squared) {
    if (pred.size() != target.size() || pred.size() != mask.size()) {
        fail(ErrorKind::dimension, "masked metric: shapes " + shape_string(pred.shape()) + ", " +
                                       shape_string(target.shape()) + ", " + shape_string(mask.shape()) + " differ");
    }
    MaskedError e;
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (mask[i] == 0.0) continue;
        const double r = target[i] - pred[i];
        total += mask[i] * (squared ? r * r : std::abs(r));
        e.observed += mask[i];
    }
    if (e.observed == 0.0) {
        e.degenerate = true;
        return e;
    }
    e.value = total / e.observed;
    return e;
}

}  // namespace

MaskedError masked_mae(const Tensor& pred, const Tensor& target, const Tensor& mask) {
    return masked_error(pred, target, mask, false);
}

MaskedError masked_mse(const Tensor& pred, const Tensor& target, const Tensor& mask) {
    return masked_error(pred, target, mask, true);
}

ad::Var masked_mae(const ad::Var& pred, const Tensor& target, const Tensor& mask, bool* degenerate) {
    ad::Tape& tape = *pred.tape();
    const Shape shape = pred.shape();
    if (target.size() != pred.value().size() || mask.size() != pred.value().size()) {
        fail(ErrorKind::dimension, "masked_mae: prediction " + shape_string(shape) + " vs target " +
                                       shape_string(target.shape()) + " / mask " + shape_string(mask.shape()));
    }
    const double count = mask.sum();
    if (degenerate) *degenerate = count == 0.0;
    if (count == 0.0) return tape.constant(Tensor::scalar(0.0));
    const auto residual = ad::abs(ad::sub(pred, tape.constant(target.reshaped(shape))));
    return ad::scale(ad::sum(ad::mul(residual, tape.constant(mask.reshaped(shape)))), 1.0 / count);
}

LossTerms coifnet_loss(const ad::Var& xhat, const Tensor& X, const Tensor& Mx, const ad::Var& yhat, const Tensor& Y,
                       const Tensor& My, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) fail(ErrorKind::config, "lambda must lie in [0, 1]");
    LossTerms terms;
    const auto forecast = masked_mae(yhat, Y, My);
    terms.forecast = forecast.value()[0];
    if (!xhat.valid()) {
        terms.total = forecast;
        return terms;
    }
    const auto imputation = masked_mae(xhat, X, Mx);
    terms.imputation = imputation.value()[0];
    terms.total = ad::add(ad::scale(imputation, 1.0 - lambda), ad::scale(forecast, lambda));
    return terms;
}

// ----------------------------------------------------------------------------
// Adam

void adam_step(CoifNetParams& params, const std::map<std::string, Tensor>& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
    for (const auto& [name, g] : grads) {
        if (!g.all_finite()) fail(ErrorKind::training, "non-finite gradient for parameter " + name);
        if (g.shape() != params.at(name).shape()) fail(ErrorKind::dimension, "gradient shape mismatch for " + name);
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (auto& [name, theta] : params.tensors) {
        const auto git = grads.find(name);
        if (git == grads.end()) fail(ErrorKind::usage, "no gradient supplied for parameter " + name);
        const Tensor& g = git->second;
        auto [mit, m_new] = state.m.try_emplace(name, theta.shape(), 0.0);
        auto [vit, v_new] = state.v.try_emplace(name, theta.shape(), 0.0);
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

// ----------------------------------------------------------------------------
// Experiment data

ExperimentData prepare_experiment(const SeriesDataset& input, const SeriesDataset& target, const SplitSpec& split,
                                  std::size_t window_length, bool standardize, const Standardizer* fixed) {
    if (input.length != target.length || input.width != target.width) {
        fail(ErrorKind::dimension, "input is " + std::to_string(input.length) + "x" + std::to_string(input.width) +
                                       " but reference is " + std::to_string(target.length) + "x" +
                                       std::to_string(target.width));
    }
    auto in = chronological_split(input, split, window_length);
    auto tg = chronological_split(target, split, window_length);
    ExperimentData data;
    if (fixed || standardize) {
        data.scaler = fixed ? *fixed : Standardizer::fit(in.train);
        const auto& s = *data.scaler;
        if (s.mean.size() != input.width || s.scale.size() != input.width)
            fail(ErrorKind::dimension, "scaler width " + std::to_string(s.mean.size()) + " does not match data width " +
                                           std::to_string(input.width));
        data.train = {s.apply(in.train), s.apply(tg.train)};
        data.val = {s.apply(in.val), s.apply(tg.val)};
        data.test = {s.apply(in.test), s.apply(tg.test)};
    } else {
        data.train = {std::move(in.train), std::move(tg.train)};
        data.val = {std::move(in.val), std::move(tg.val)};
        data.test = {std::move(in.test), std::move(tg.test)};
    }
    return data;
}

ExperimentData prepare_experiment(const SeriesDataset& raw, const Mask& mask, const SplitSpec& split,
                                  std::size_t window_length, bool standardize) {
    return prepare_experiment(apply_mask(raw, mask), raw, split, window_length, standardize, nullptr);
}

// ----------------------------------------------------------------------------
// Evaluation

void TrainConfig::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) fail(ErrorKind::config, "lambda must lie in [0, 1], got " + std::to_string(lambda));
    if (!(lr > 0.0)) fail(ErrorKind::config, "learning rate must be > 0");
    if (batch_size < 1 || eval_batch_size < 1) fail(ErrorKind::config, "batch sizes must be >= 1");
    if (max_epochs < 1) fail(ErrorKind::config, "max_epochs must be >= 1");
    if (patience < 1) fail(ErrorKind::config, "patience must be >= 1");
    if (optimizer != "adam") fail(ErrorKind::config, "unsupported optimizer '" + optimizer + "'");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        fail(ErrorKind::config, "Adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) fail(ErrorKind::config, "adam_eps must be > 0");
    if (!(clip_norm >= 0.0)) fail(ErrorKind::config, "clip_norm must be >= 0");
    if (stride < 1) fail(ErrorKind::config, "stride must be >= 1");
}

EvalMetrics evaluate(const CoifNetParams& params, const ModelConfig& cfg, const SplitData& split,
                     std::size_t batch_size, std::size_t stride) {
    const std::size_t L = cfg.lookback;
    const std::size_t H = cfg.horizon;
    const auto starts = window_starts(split.input.length, L, H, stride);
    Rng unused(0);
    EvalMetrics m;
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    double imp_sum = 0.0;
    for (std::size_t begin = 0; begin < starts.size(); begin += batch_size) {
        const std::size_t end = std::min(starts.size(), begin + batch_size);
        const std::span<const std::size_t> chunk(starts.data() + begin, end - begin);
        const auto batch = collate(split.input, split.target, chunk, L, H);
        const auto fo = forward(batch, params, cfg, false, unused);
        for (std::size_t i = 0; i < fo.Yhat.size(); ++i) {
            if (batch.My[i] == 0.0) continue;
            const double r = batch.Y[i] - fo.Yhat[i];
            abs_sum += std::abs(r);
            sq_sum += r * r;
            m.observed += 1.0;
        }
        if (fo.Xhat.size() != 0) {
            const auto reference = collate(split.target, split.target, chunk, L, H);
            for (std::size_t i = 0; i < fo.Xhat.size(); ++i) {
                if (reference.Mx[i] == 0.0 || batch.Mx[i] != 0.0) continue;
                imp_sum += std::abs(reference.X[i] - fo.Xhat[i]);
                m.imputation_count += 1.0;
            }
        }
    }
    m.windows = starts.size();
    if (m.observed > 0.0) {
        m.mae = abs_sum / m.observed;
        m.mse = sq_sum / m.observed;
    }
    if (m.imputation_count > 0.0) m.imputation_mae = imp_sum / m.imputation_count;
    return m;
}

// ----------------------------------------------------------------------------
// Training loop

namespace {

void clip_global_norm(std::map<std::string, Tensor>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [_, g] : grads)
        for (const double v : g.data()) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    const double factor = max_norm / norm;
    for (auto& [_, g] : grads)
        for (auto& v : g.data()) v *= factor;
}

}  // namespace

bool EarlyStopping::update(double val_mae) {
    if (val_mae < best) {
        best = val_mae;
        since_best = 0;
        return true;
    }
    ++since_best;
    return false;
}

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const ExperimentData& data) {
    model_cfg.validate();
    cfg.validate();
    const auto clock_start = std::chrono::steady_clock::now();
    const std::size_t L = model_cfg.lookback;
    const std::size_t H = model_cfg.horizon;
    if (data.train.input.width != model_cfg.width) {
        fail(ErrorKind::dimension, "dataset has D=" + std::to_string(data.train.input.width) + " but model expects D=" +
                                       std::to_string(model_cfg.width));
    }

    Rng init_rng(derive_seed(cfg.seed, Stream::init));
    Rng shuffle_rng(derive_seed(cfg.seed, Stream::shuffle));
    Rng dropout_rng(derive_seed(cfg.seed, Stream::dropout));

    CoifNetParams params = init_params(model_cfg, init_rng);
    AdamState adam;
    auto order = window_starts(data.train.input.length, L, H, cfg.stride);
    // Validation windows must exist before any training happens.
    window_starts(data.val.input.length, L, H, cfg.stride);
    window_starts(data.test.input.length, L, H, cfg.stride);

    TrainResult result;
    result.report.parameter_count = params.count();
    EarlyStopping stopper{cfg.patience};

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        // Fisher-Yates with the documented integer draw.
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            const std::span<const std::size_t> chunk(order.data() + begin, end - begin);
            const auto batch = collate(data.train.input, data.train.input, chunk, L, H);
            LossTerms terms;
            double loss = 0.0;
            std::map<std::string, Tensor> grads;
            try {
                auto fo = forward(batch, params, model_cfg, true, dropout_rng);
                terms = coifnet_loss(fo.out.xhat, batch.X, batch.Mx, fo.out.yhat, batch.Y, batch.My, cfg.lambda);
                loss = terms.total.value()[0];
                fo.tape->backward(terms.total);
                grads = fo.tape->parameter_grads();
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::numerical) throw;
                std::ostringstream os;
                os << "training diverged at epoch " << epoch << ", batch " << batches << ": " << e.what()
                   << " (last loss terms: imputation=" << terms.imputation << ", forecast=" << terms.forecast << ")";
                fail(ErrorKind::training, os.str());
            }
            if (!std::isfinite(loss)) {
                std::ostringstream os;
                os << "non-finite loss at epoch " << epoch << ", batch " << batches << " (imputation=" << terms.imputation
                   << ", forecast=" << terms.forecast << ")";
                fail(ErrorKind::training, os.str());
            }
            if (cfg.clip_norm > 0.0) clip_global_norm(grads, cfg.clip_norm);
            adam_step(params, grads, adam, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
            loss_sum += loss;
            ++batches;
        }

        const auto val = evaluate(params, model_cfg, data.val, cfg.eval_batch_size, cfg.stride);
        result.report.epochs.push_back({epoch, loss_sum / static_cast<double>(batches), val.mae, val.mse});
        if (stopper.update(val.mae)) {
            result.params = params;
            result.adam = adam;
            result.epoch = epoch;
            result.shuffle_rng = shuffle_rng.state();
            result.dropout_rng = dropout_rng.state();
            result.report.best_epoch = epoch;
            result.report.best_val_mae = val.mae;
        } else if (stopper.should_stop()) {
            result.report.stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }

    result.report.test = evaluate(result.params, model_cfg, data.test, cfg.eval_batch_size, cfg.stride);
    result.report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
    return result;
}

// ----------------------------------------------------------------------------
// Two-stage baseline

namespace {

using MatrixXd = Eigen::MatrixXd;

double filled(const SeriesDataset& ds, const std::vector<double>& fill, std::size_t t, std::size_t d) {
    return ds.is_observed(t, d) ? ds.value(t, d) : fill[d];
}

}  // namespace

std::vector<double> RidgeForecaster::predict(const SeriesDataset& input, std::size_t start, std::size_t variate) const {
    const auto& w = coef.at(variate);
    std::vector<double> out(horizon, 0.0);
    for (std::size_t j = 0; j < horizon; ++j) out[j] = w[lookback * horizon + j];
    for (std::size_t i = 0; i < lookback; ++i) {
        const double x = filled(input, fill, start + i, variate);
        for (std::size_t j = 0; j < horizon; ++j) out[j] += x * w[i * horizon + j];
    }
    return out;
}

RidgeForecaster fit_ridge_baseline(const SeriesDataset& train_input, std::size_t lookback, std::size_t horizon,
                                   double ridge_penalty, std::size_t stride) {
    if (!(ridge_penalty >= 0.0)) fail(ErrorKind::config, "ridge penalty must be >= 0");
    RidgeForecaster model;
    model.lookback = lookback;
    model.horizon = horizon;
    model.fill = Standardizer::fit(train_input).mean;
    const auto starts = window_starts(train_input.length, lookback, horizon, stride);
    const std::size_t n = starts.size();
    const std::size_t p = lookback + 1;
    for (std::size_t d = 0; d < train_input.width; ++d) {
        MatrixXd A(n, p);
        MatrixXd Y(n, horizon);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t i = 0; i < lookback; ++i) A(r, i) = filled(train_input, model.fill, starts[r] + i, d);
            A(r, lookback) = 1.0;
            for (std::size_t j = 0; j < horizon; ++j) Y(r, j) = filled(train_input, model.fill, starts[r] + lookback + j, d);
        }
        MatrixXd gram = A.transpose() * A;
        for (std::size_t i = 0; i < lookback; ++i) gram(i, i) += ridge_penalty;
        Eigen::LLT<MatrixXd> llt(gram);
        if (llt.info() != Eigen::Success) {
            fail(ErrorKind::numerical, "ridge normal matrix is singular for variate " + std::to_string(d) +
                                           "; use a positive penalty");
        }
        const MatrixXd W = llt.solve(A.transpose() * Y);
        if (!W.allFinite()) fail(ErrorKind::numerical, "ridge solution is not finite for variate " + std::to_string(d));
        std::vector<double> flat(p * horizon);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < horizon; ++j) flat[i * horizon + j] = W(i, j);
        model.coef.push_back(std::move(flat));
    }
    return model;
}

EvalMetrics evaluate_baseline(const RidgeForecaster& model, const SplitData& split, std::size_t stride) {
    const auto starts = window_starts(split.input.length, model.lookback, model.horizon, stride);
    EvalMetrics m;
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    for (const auto s : starts) {
        for (std::size_t d = 0; d < split.input.width; ++d) {
            const auto pred = model.predict(split.input, s, d);
            for (std::size_t j = 0; j < model.horizon; ++j) {
                const std::size_t t = s + model.lookback + j;
                if (!split.target.is_observed(t, d)) continue;
                const double r = split.target.value(t, d) - pred[j];
                abs_sum += std::abs(r);
                sq_sum += r * r;
                m.observed += 1.0;
            }
        }
    }
    m.windows = starts.size();
    if (m.observed > 0.0) {
        m.mae = abs_sum / m.observed;
        m.mse = sq_sum / m.observed;
    }
    return m;
}

EvalMetrics baseline_two_stage(const ExperimentData& data, std::size_t lookback, std::size_t horizon,
                               double ridge_penalty, std::size_t stride) {
    const auto model = fit_ridge_baseline(data.train.input, lookback, horizon, ridge_penalty, stride);
    return evaluate_baseline(model, data.test, stride);
}

// ----------------------------------------------------------------------------
// Lambda sweep

std::vector<SweepRow> lambda_sweep(const std::vector<double>& lambdas, const ModelConfig& model_cfg,
                                   const TrainConfig& train_cfg, const ExperimentData& data) {
    for (const double l : lambdas)
        if (!(l >= 0.0 && l <= 1.0)) fail(ErrorKind::config, "sweep lambda outside [0, 1]: " + std::to_string(l));
    std::vector<SweepRow> rows;
    for (const double l : lambdas) {
        TrainConfig cfg = train_cfg;
        cfg.lambda = l;
        const auto r = train(model_cfg, cfg, data);
        rows.push_back({l, r.report.test.mae, r.report.test.mse, r.report.best_epoch});
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os.precision(17);
    os << "lambda,mae,mse,best_epoch\n";
    for (const auto& r : rows) os << r.lambda << ',' << r.mae << ',' << r.mse << ',' << r.best_epoch << '\n';
    return os.str();
}

}  // namespace coifnet
