#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "coifnet/autodiff.hpp"
#include "coifnet/dataset.hpp"
#include "coifnet/rng.hpp"
#include "coifnet/tensor.hpp"

namespace coifnet {

// Component switches. Defaults give the full model; each flag maps to one
// ablation row (mask input, timestamps, CTF, CVF, RevON, RevIN stats, Y-only head).
struct Ablations {
    bool use_mask_input = true;
    bool use_timestamps = true;
    bool use_ctf = true;
    bool use_cvf = true;
    bool use_revon = true;
    bool revin_mode = false;
    bool forecast_only_head = false;

    // Applies a named switch: no_mask, no_timestamps, no_ctf, no_cvf, no_revon,
    // revin, forecast_only. Unknown names are a config error.
    void apply(const std::string& name);
    std::vector<std::string> names() const;

    friend bool operator==(const Ablations&, const Ablations&) = default;
};

struct ModelConfig {
    std::size_t lookback = 96;   // L
    std::size_t horizon = 96;    // H
    std::size_t width = 7;       // D
    std::size_t hidden = 256;    // h
    std::size_t day_embed = 8;   // C_d
    std::size_t hour_embed = 8;  // C_h
    double dropout = 0.1;
    double eps = 1e-5;
    Ablations ablations;

    std::size_t embed_width() const { return ablations.use_timestamps ? day_embed + hour_embed : 0; }
    // Column count of the composed input, 2D + C.
    std::size_t feature_width() const { return 2 * width + embed_width(); }
    std::size_t output_length() const { return ablations.forecast_only_head ? horizon : lookback + horizon; }

    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// |gamma| is kept at or above this during de-normalization.
inline constexpr double kGammaGuard = 1e-8;

// Learnable tensors keyed by name; iteration order (sorted by name) is the
// canonical order for initialization, optimizer updates and serialization.
struct CoifNetParams {
    std::map<std::string, Tensor> tensors;

    const Tensor& at(const std::string& name) const;
    Tensor& at(const std::string& name);
    std::size_t count() const;

    friend bool operator==(const CoifNetParams&, const CoifNetParams&) = default;
};

// Shapes of every parameter the configuration instantiates.
std::map<std::string, Shape> parameter_shapes(const ModelConfig& cfg);
CoifNetParams init_params(const ModelConfig& cfg, Rng& rng);
// Closed-form parameter count from (L, H, D, h, C_d, C_h) and the ablation flags.
std::size_t closed_form_parameter_count(const ModelConfig& cfg);

// Per-sample, per-variate statistics (B x D each).
struct RevonStats {
    Tensor mean;
    Tensor var;
    Tensor obs_count;
};

// Observed-value statistics; with `use_mask` false every entry counts (RevIN).
// Columns without observations fall back to mean 0, variance 1.
RevonStats compute_revon_stats(const Tensor& X, const Tensor& Mx, bool use_mask);

using ParamVars = std::map<std::string, ad::Var>;
ParamVars bind_parameters(ad::Tape& tape, const CoifNetParams& params);

// Batched building blocks. Row layouts: `N = B*L` rows for per-step tensors.

// Xbar = (gamma * (X - mean) / sqrt(var + eps) + beta) * Mx, rows (B*L) x D.
// Without `mask_product` (RevIN mode) the final mask multiplication is skipped.
ad::Var revon_normalize(ad::Tape& tape, const Tensor& X, const Tensor& Mx, const RevonStats& stats,
                        const ad::Var& gamma, const ad::Var& beta, double eps, bool mask_product = true);

// Row t = [E_day[dow[t]] | E_hour[hod[t]]].
ad::Var embed_timestamps(std::span<const std::size_t> dow, std::span<const std::size_t> hod, const ad::Var& day_table,
                         const ad::Var& hour_table);

// [Xbar | Mx | E_tau]; ones replace Mx without mask input, E_tau is dropped without timestamps.
ad::Var compose_input(const ad::Var& xbar, const Tensor& Mx, const ad::Var* e_tau, const Ablations& ablations);

// (B*L) x F  ->  (B*h) x F: gated fusion along the time axis of each sample.
ad::Var ctf_forward(const ad::Var& z_in, std::size_t batch, const ParamVars& p, double dropout, bool training,
                    Rng& rng, bool gated = true);

// (B*h) x F  ->  (B*h) x D: gated fusion along the feature axis.
ad::Var cvf_forward(const ad::Var& z_ctf, const ParamVars& p, double dropout, bool training, Rng& rng,
                    bool gated = true);

struct Projection {
    ad::Var xhat;  // (B*L) x D; unbound for the forecast-only head
    ad::Var yhat;  // (B*H) x D
};

// Projects to L+H (or H) steps per variate, then inverts the RevON affine map.
Projection project_and_denorm(const ad::Var& z_cvf, std::size_t batch, const RevonStats* stats, const ParamVars& p,
                              const ModelConfig& cfg);

struct ForwardOutput {
    std::unique_ptr<ad::Tape> tape;
    ParamVars params;
    RevonStats stats;
    Projection out;
    Tensor Xhat;  // B x L x D (empty for the forecast-only head)
    Tensor Yhat;  // B x H x D
};

ForwardOutput forward(const WindowBatch& batch, const CoifNetParams& params, const ModelConfig& cfg, bool training,
                      Rng& dropout_rng);

// Single-window convenience form of revon_normalize (L x D inputs).
struct RevonResult {
    Tensor xbar;
    RevonStats stats;
};
RevonResult revon_normalize(const Tensor& X, const Tensor& Mx, const Tensor& gamma, const Tensor& beta, double eps);

}  // namespace coifnet
