#include "coifnet/model.hpp"

#include <algorithm>
#include <cmath>

#include "coifnet/errors.hpp"

namespace coifnet {

// ----------------------------------------------------------------------------
// Configuration

void Ablations::apply(const std::string& name) {
    if (name == "no_mask") use_mask_input = false;
    else if (name == "no_timestamps") use_timestamps = false;
    else if (name == "no_ctf") use_ctf = false;
    else if (name == "no_cvf") use_cvf = false;
    else if (name == "no_revon") use_revon = false;
    else if (name == "revin") revin_mode = true;
    else if (name == "forecast_only") forecast_only_head = true;
    else fail(ErrorKind::config, "unknown ablation '" + name + "'");
}

std::vector<std::string> Ablations::names() const {
    std::vector<std::string> out;
    if (!use_mask_input) out.emplace_back("no_mask");
    if (!use_timestamps) out.emplace_back("no_timestamps");
    if (!use_ctf) out.emplace_back("no_ctf");
    if (!use_cvf) out.emplace_back("no_cvf");
    if (!use_revon) out.emplace_back("no_revon");
    if (revin_mode) out.emplace_back("revin");
    if (forecast_only_head) out.emplace_back("forecast_only");
    return out;
}

void ModelConfig::validate() const {
    if (lookback < 1 || horizon < 1 || width < 1) fail(ErrorKind::config, "L, H and D must be >= 1");
    if (hidden < 1) fail(ErrorKind::config, "hidden size must be >= 1");
    if (ablations.use_timestamps && (day_embed < 1 || hour_embed < 1)) {
        fail(ErrorKind::config, "embedding sizes must be >= 1 when timestamps are used");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorKind::config, "dropout must lie in [0, 1)");
    if (!(eps > 0.0)) fail(ErrorKind::config, "eps must be > 0");
    if (!ablations.use_revon && ablations.revin_mode) {
        fail(ErrorKind::config, "revin mode replaces RevON and cannot be combined with no_revon");
    }
}

// ----------------------------------------------------------------------------
// Parameters

const Tensor& CoifNetParams::at(const std::string& name) const {
    const auto it = tensors.find(name);
    if (it == tensors.end()) fail(ErrorKind::usage, "no parameter named " + name);
    return it->second;
}

Tensor& CoifNetParams::at(const std::string& name) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) fail(ErrorKind::usage, "no parameter named " + name);
    return it->second;
}

std::size_t CoifNetParams::count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors) n += t.size();
    return n;
}

std::map<std::string, Shape> parameter_shapes(const ModelConfig& cfg) {
    cfg.validate();
    const std::size_t L = cfg.lookback;
    const std::size_t D = cfg.width;
    const std::size_t h = cfg.hidden;
    const std::size_t F = cfg.feature_width();
    const auto& ab = cfg.ablations;
    std::map<std::string, Shape> s;
    if (ab.use_revon) {
        s["revon.gamma"] = {1, D};
        s["revon.beta"] = {1, D};
    }
    if (ab.use_timestamps) {
        s["embed.day"] = {7, cfg.day_embed};
        s["embed.hour"] = {24, cfg.hour_embed};
    }
    if (ab.use_ctf) {
        s["ctf.W_alpha"] = {L, h};
        s["ctf.b_alpha"] = {1, h};
        s["ctf.W_d"] = {L, h};
        s["ctf.b_d"] = {1, h};
        s["ctf.W_p"] = {h, h};
        s["ctf.b_p"] = {1, h};
    } else {
        s["ctf.W_lin"] = {L, h};
        s["ctf.b_lin"] = {1, h};
    }
    if (ab.use_cvf) {
        s["cvf.W_alpha"] = {F, D};
        s["cvf.b_alpha"] = {1, D};
        s["cvf.W_d"] = {F, D};
        s["cvf.b_d"] = {1, D};
        s["cvf.W_p"] = {D, D};
        s["cvf.b_p"] = {1, D};
    } else {
        s["cvf.W_lin"] = {F, D};
        s["cvf.b_lin"] = {1, D};
    }
    s["proj.W_o"] = {h, cfg.output_length()};
    s["proj.b_o"] = {1, cfg.output_length()};
    return s;
}

CoifNetParams init_params(const ModelConfig& cfg, Rng& rng) {
    CoifNetParams p;
    for (const auto& [name, shape] : parameter_shapes(cfg)) {
        Tensor t(shape, 0.0);
        if (name == "revon.gamma") {
            t = Tensor(shape, 1.0);
        } else if (name.starts_with("embed.")) {
            for (auto& v : t.data()) v = rng.uniform(-0.1, 0.1);
        } else if (name.find(".W_") != std::string::npos) {
            // Uniform with fan-in scaling, bound 1/sqrt(fan_in).
            const double bound = 1.0 / std::sqrt(static_cast<double>(shape[0]));
            for (auto& v : t.data()) v = rng.uniform(-bound, bound);
        }
        p.tensors.emplace(name, std::move(t));
    }
    return p;
}

std::size_t closed_form_parameter_count(const ModelConfig& cfg) {
    const std::size_t L = cfg.lookback;
    const std::size_t D = cfg.width;
    const std::size_t h = cfg.hidden;
    const std::size_t F = cfg.feature_width();
    const auto& ab = cfg.ablations;
    std::size_t n = 0;
    if (ab.use_revon) n += 2 * D;
    if (ab.use_timestamps) n += 7 * cfg.day_embed + 24 * cfg.hour_embed;
    n += ab.use_ctf ? 2 * (L * h + h) + h * h + h : L * h + h;
    n += ab.use_cvf ? 2 * (F * D + D) + D * D + D : F * D + D;
    n += h * cfg.output_length() + cfg.output_length();
    return n;
}

ParamVars bind_parameters(ad::Tape& tape, const CoifNetParams& params) {
    ParamVars vars;
    for (const auto& [name, t] : params.tensors) vars.emplace(name, tape.parameter(name, t));
    return vars;
}

namespace {

const ad::Var& param(const ParamVars& p, const std::string& name) {
    const auto it = p.find(name);
    if (it == p.end()) fail(ErrorKind::usage, "parameter " + name + " is not bound");
    return it->second;
}

struct BatchDims {
    std::size_t batch;
    std::size_t steps;
    std::size_t width;
};

BatchDims dims_of(const Tensor& X) {
    if (X.rank() == 3) return {X.dim(0), X.dim(1), X.dim(2)};
    if (X.rank() == 2) return {1, X.dim(0), X.dim(1)};
    fail(ErrorKind::dimension, "expected an L x D or B x L x D tensor, got " + shape_string(X.shape()));
}

// B x D stats -> (B*D) x 1 column in sample-major, variate-minor order.
Tensor as_column(const Tensor& t) { return t.reshaped(Shape{t.size(), 1}); }

}  // namespace

// ----------------------------------------------------------------------------
// RevON

RevonStats compute_revon_stats(const Tensor& X, const Tensor& Mx, bool use_mask) {
    const auto [B, L, D] = dims_of(X);
    if (Mx.size() != X.size()) fail(ErrorKind::dimension, "revon: X and Mx differ in size");
    RevonStats s{Tensor::matrix(B, D), Tensor::matrix(B, D, 1.0), Tensor::matrix(B, D)};
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t d = 0; d < D; ++d) {
            double count = 0.0;
            double total = 0.0;
            for (std::size_t t = 0; t < L; ++t) {
                const std::size_t i = (b * L + t) * D + d;
                const double m = use_mask ? Mx[i] : 1.0;
                count += m;
                total += m * X[i];
            }
            s.obs_count(b, d) = count;
            if (count == 0.0) continue;  // fallback (0, 1)
            const double mean = total / count;
            double ss = 0.0;
            for (std::size_t t = 0; t < L; ++t) {
                const std::size_t i = (b * L + t) * D + d;
                const double m = use_mask ? Mx[i] : 1.0;
                const double r = X[i] - mean;
                ss += m * r * r;
            }
            s.mean(b, d) = mean;
            s.var(b, d) = ss / count;
        }
    }
    return s;
}

ad::Var revon_normalize(ad::Tape& tape, const Tensor& X, const Tensor& Mx, const RevonStats& stats,
                        const ad::Var& gamma, const ad::Var& beta, double eps, bool mask_product) {
    const auto [B, L, D] = dims_of(X);
    Tensor xnorm = Tensor::matrix(B * L, D);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < L; ++t) {
            for (std::size_t d = 0; d < D; ++d) {
                const std::size_t i = (b * L + t) * D + d;
                xnorm[i] = (X[i] - stats.mean(b, d)) / std::sqrt(stats.var(b, d) + eps);
            }
        }
    }
    auto x = tape.constant(std::move(xnorm));
    auto affine = ad::add(ad::mul(x, gamma), beta);
    if (!mask_product) return affine;
    return ad::mul(affine, tape.constant(Mx.reshaped(Shape{B * L, D})));
}

RevonResult revon_normalize(const Tensor& X, const Tensor& Mx, const Tensor& gamma, const Tensor& beta, double eps) {
    ad::Tape tape;
    RevonResult r;
    r.stats = compute_revon_stats(X, Mx, true);
    const auto g = tape.constant(gamma.reshaped(Shape{1, gamma.size()}));
    const auto b = tape.constant(beta.reshaped(Shape{1, beta.size()}));
    r.xbar = revon_normalize(tape, X, Mx, r.stats, g, b, eps).value();
    return r;
}

// ----------------------------------------------------------------------------
// Input composition

ad::Var embed_timestamps(std::span<const std::size_t> dow, std::span<const std::size_t> hod, const ad::Var& day_table,
                         const ad::Var& hour_table) {
    if (dow.size() != hod.size()) fail(ErrorKind::dimension, "embed_timestamps: dow and hod lengths differ");
    for (const auto d : dow)
        if (d > 6) fail(ErrorKind::usage, "day-of-week index " + std::to_string(d) + " outside [0, 6]");
    for (const auto h : hod)
        if (h > 23) fail(ErrorKind::usage, "hour-of-day index " + std::to_string(h) + " outside [0, 23]");
    const ad::Var parts[] = {ad::gather_rows(day_table, dow), ad::gather_rows(hour_table, hod)};
    return ad::concat_cols(parts);
}

ad::Var compose_input(const ad::Var& xbar, const Tensor& Mx, const ad::Var* e_tau, const Ablations& ablations) {
    ad::Tape& tape = *xbar.tape();
    const Shape rows_shape = xbar.shape();
    const Tensor slab = ablations.use_mask_input ? Mx.reshaped(rows_shape) : Tensor(rows_shape, 1.0);
    std::vector<ad::Var> parts{xbar, tape.constant(slab)};
    if (ablations.use_timestamps) {
        if (!e_tau) fail(ErrorKind::usage, "compose_input: timestamp embeddings required");
        parts.push_back(*e_tau);
    }
    return ad::concat_cols(parts);
}

// ----------------------------------------------------------------------------
// Fusion blocks

namespace {

// sigma(x W_a + b_a) * (x W_d + b_d)
ad::Var gated(const ad::Var& x, const ad::Var& w_alpha, const ad::Var& b_alpha, const ad::Var& w_d, const ad::Var& b_d) {
    const auto gate = ad::sigmoid(ad::add(ad::matmul(x, w_alpha), b_alpha));
    const auto value = ad::add(ad::matmul(x, w_d), b_d);
    return ad::mul(gate, value);
}

}  // namespace

ad::Var ctf_forward(const ad::Var& z_in, std::size_t batch, const ParamVars& p, double dropout, bool training,
                    Rng& rng, bool gated_block) {
    // Rows become (sample, feature), columns time steps.
    const auto a = ad::block_transpose(z_in, batch);
    ad::Var z;
    if (gated_block) {
        auto zd = gated(a, param(p, "ctf.W_alpha"), param(p, "ctf.b_alpha"), param(p, "ctf.W_d"), param(p, "ctf.b_d"));
        zd = ad::dropout(zd, dropout, training, rng);
        z = ad::add(ad::matmul(zd, param(p, "ctf.W_p")), param(p, "ctf.b_p"));
    } else {
        z = ad::add(ad::matmul(a, param(p, "ctf.W_lin")), param(p, "ctf.b_lin"));
    }
    return ad::block_transpose(z, batch);
}

ad::Var cvf_forward(const ad::Var& z_ctf, const ParamVars& p, double dropout, bool training, Rng& rng,
                    bool gated_block) {
    if (!gated_block) return ad::add(ad::matmul(z_ctf, param(p, "cvf.W_lin")), param(p, "cvf.b_lin"));
    auto zd = gated(z_ctf, param(p, "cvf.W_alpha"), param(p, "cvf.b_alpha"), param(p, "cvf.W_d"), param(p, "cvf.b_d"));
    zd = ad::dropout(zd, dropout, training, rng);
    return ad::add(ad::matmul(zd, param(p, "cvf.W_p")), param(p, "cvf.b_p"));
}

Projection project_and_denorm(const ad::Var& z_cvf, std::size_t batch, const RevonStats* stats, const ParamVars& p,
                              const ModelConfig& cfg) {
    ad::Tape& tape = *z_cvf.tape();
    const std::size_t D = cfg.width;
    const std::size_t L = cfg.lookback;
    const std::size_t H = cfg.horizon;
    // Rows (sample, variate), columns output positions [X~ | Y~].
    auto out = ad::add(ad::matmul(ad::block_transpose(z_cvf, batch), param(p, "proj.W_o")), param(p, "proj.b_o"));

    if (cfg.ablations.use_revon) {
        if (!stats) fail(ErrorKind::usage, "project_and_denorm: RevON statistics required");
        const auto column = [&](const ad::Var& v) { return ad::tile_rows(ad::reshape(v, Shape{D, 1}), batch); };
        const auto gamma = ad::clamp_abs_min(column(param(p, "revon.gamma")), kGammaGuard);
        const auto beta = column(param(p, "revon.beta"));
        Tensor scale = as_column(stats->var);
        for (auto& v : scale.data()) v = std::sqrt(v + cfg.eps);
        out = ad::div(ad::sub(out, beta), gamma);
        out = ad::add(ad::mul(out, tape.constant(std::move(scale))), tape.constant(as_column(stats->mean)));
    }

    Projection proj;
    if (cfg.ablations.forecast_only_head) {
        proj.yhat = ad::block_transpose(out, batch);
        return proj;
    }
    proj.xhat = ad::block_transpose(ad::slice_cols(out, 0, L), batch);
    proj.yhat = ad::block_transpose(ad::slice_cols(out, L, L + H), batch);
    return proj;
}

// ----------------------------------------------------------------------------
// Full forward pass

ForwardOutput forward(const WindowBatch& batch, const CoifNetParams& params, const ModelConfig& cfg, bool training,
                      Rng& dropout_rng) {
    if (batch.lookback != cfg.lookback || batch.horizon != cfg.horizon || batch.width != cfg.width) {
        fail(ErrorKind::dimension, "batch (L=" + std::to_string(batch.lookback) + ", H=" + std::to_string(batch.horizon) +
                                       ", D=" + std::to_string(batch.width) + ") does not match model config (L=" +
                                       std::to_string(cfg.lookback) + ", H=" + std::to_string(cfg.horizon) +
                                       ", D=" + std::to_string(cfg.width) + ")");
    }
    const std::size_t B = batch.batch;
    const std::size_t L = cfg.lookback;
    const std::size_t D = cfg.width;
    const auto& ab = cfg.ablations;

    ForwardOutput fo;
    fo.tape = std::make_unique<ad::Tape>();
    ad::Tape& tape = *fo.tape;
    fo.params = bind_parameters(tape, params);

    ad::Var xbar;
    if (ab.use_revon) {
        fo.stats = compute_revon_stats(batch.X, batch.Mx, !ab.revin_mode);
        xbar = revon_normalize(tape, batch.X, batch.Mx, fo.stats, param(fo.params, "revon.gamma"),
                               param(fo.params, "revon.beta"), cfg.eps, !ab.revin_mode);
    } else {
        xbar = tape.constant(batch.X.reshaped(Shape{B * L, D}));
    }

    ad::Var e_tau;
    if (ab.use_timestamps)
        e_tau = embed_timestamps(batch.dow, batch.hod, param(fo.params, "embed.day"), param(fo.params, "embed.hour"));
    const auto z_in = compose_input(xbar, batch.Mx, ab.use_timestamps ? &e_tau : nullptr, ab);
    const auto z_ctf = ctf_forward(z_in, B, fo.params, cfg.dropout, training, dropout_rng, ab.use_ctf);
    const auto z_cvf = cvf_forward(z_ctf, fo.params, cfg.dropout, training, dropout_rng, ab.use_cvf);
    fo.out = project_and_denorm(z_cvf, B, ab.use_revon ? &fo.stats : nullptr, fo.params, cfg);

    if (fo.out.xhat.valid()) fo.Xhat = fo.out.xhat.value().reshaped(Shape{B, L, D});
    fo.Yhat = fo.out.yhat.value().reshaped(Shape{B, cfg.horizon, D});
    return fo;
}

}  // namespace coifnet
