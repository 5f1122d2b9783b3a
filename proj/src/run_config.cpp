#include "coifnet/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "coifnet/errors.hpp"
#include "coifnet/rng.hpp"

namespace coifnet {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
    if (!j.is_object()) fail(ErrorKind::config, where + " must be a JSON object");
    const std::set<std::string> allowed(known.begin(), known.end());
    for (const auto& [key, _] : j.items())
        if (!allowed.contains(key)) fail(ErrorKind::config, "unknown key '" + key + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        fail(ErrorKind::config, where + "." + key + " has the wrong type");
    }
}

}  // namespace

json to_json(const ModelConfig& c) {
    return json{{"lookback", c.lookback},   {"horizon", c.horizon},       {"width", c.width},
                {"hidden", c.hidden},       {"day_embed", c.day_embed},   {"hour_embed", c.hour_embed},
                {"dropout", c.dropout},     {"eps", c.eps},               {"ablations", c.ablations.names()}};
}

ModelConfig model_config_from_json(const json& j) {
    reject_unknown(j, {"lookback", "horizon", "width", "hidden", "day_embed", "hour_embed", "dropout", "eps", "ablations"},
                   "model");
    ModelConfig c;
    read(j, "lookback", c.lookback, "model");
    read(j, "horizon", c.horizon, "model");
    read(j, "width", c.width, "model");
    read(j, "hidden", c.hidden, "model");
    read(j, "day_embed", c.day_embed, "model");
    read(j, "hour_embed", c.hour_embed, "model");
    read(j, "dropout", c.dropout, "model");
    read(j, "eps", c.eps, "model");
    std::vector<std::string> ablations;
    read(j, "ablations", ablations, "model");
    for (const auto& a : ablations) c.ablations.apply(a);
    return c;
}

json to_json(const TrainConfig& c) {
    return json{{"lambda", c.lambda},
                {"lr", c.lr},
                {"batch_size", c.batch_size},
                {"max_epochs", c.max_epochs},
                {"patience", c.patience},
                {"seed", c.seed},
                {"optimizer", c.optimizer},
                {"adam_betas", {c.adam_beta1, c.adam_beta2}},
                {"adam_eps", c.adam_eps},
                {"clip_norm", c.clip_norm},
                {"stride", c.stride},
                {"eval_batch_size", c.eval_batch_size}};
}

TrainConfig train_config_from_json(const json& j) {
    reject_unknown(j, {"lambda", "lr", "batch_size", "max_epochs", "patience", "seed", "optimizer", "adam_betas",
                       "adam_eps", "clip_norm", "stride", "eval_batch_size"},
                   "train");
    TrainConfig c;
    read(j, "lambda", c.lambda, "train");
    read(j, "lr", c.lr, "train");
    read(j, "batch_size", c.batch_size, "train");
    read(j, "max_epochs", c.max_epochs, "train");
    read(j, "patience", c.patience, "train");
    read(j, "seed", c.seed, "train");
    read(j, "optimizer", c.optimizer, "train");
    if (j.contains("adam_betas")) {
        std::vector<double> betas;
        read(j, "adam_betas", betas, "train");
        if (betas.size() != 2) fail(ErrorKind::config, "train.adam_betas must hold two values");
        c.adam_beta1 = betas[0];
        c.adam_beta2 = betas[1];
    }
    read(j, "adam_eps", c.adam_eps, "train");
    read(j, "clip_norm", c.clip_norm, "train");
    read(j, "stride", c.stride, "train");
    read(j, "eval_batch_size", c.eval_batch_size, "train");
    return c;
}

json to_json(const SplitSpec& s) { return json{{"train", s.train_frac}, {"val", s.val_frac}, {"test", s.test_frac}}; }

SplitSpec split_spec_from_json(const json& j) {
    reject_unknown(j, {"train", "val", "test"}, "split");
    SplitSpec s;
    read(j, "train", s.train_frac, "split");
    read(j, "val", s.val_frac, "split");
    read(j, "test", s.test_frac, "split");
    return s;
}

void RunConfig::resolve() {
    if (mask.seed_from_root) mask.spec.seed = derive_seed(seed, Stream::mask);
    mask.seed_from_root = false;
    train.seed = seed;
    validate();
}

void RunConfig::validate() const {
    if (data.path.empty()) fail(ErrorKind::config, "data.path is required");
    split.validate();
    if (!(mask.spec.rate >= 0.0 && mask.spec.rate <= 1.0)) fail(ErrorKind::config, "mask.rate must lie in [0, 1]");
    if (mask.spec.lt < 1 || mask.spec.lc < 1) fail(ErrorKind::config, "mask.lt and mask.lc must be >= 1");
    model.validate();
    train.validate();
    if (!(ridge_penalty >= 0.0)) fail(ErrorKind::config, "ridge_penalty must be >= 0");
}

json to_json(const RunConfig& c) {
    json mask{{"pattern", to_string(c.mask.spec.pattern)},
              {"rate", c.mask.spec.rate},
              {"lt", c.mask.spec.lt},
              {"lc", c.mask.spec.lc}};
    if (c.mask.seed_from_root) mask["seed"] = nullptr;
    else mask["seed"] = c.mask.spec.seed;
    mask["file"] = c.mask.file;
    return json{{"data",
                 {{"path", c.data.path},
                  {"time_column", c.data.time_column},
                  {"columns", c.data.columns},
                  {"standardize", c.data.standardize}}},
                {"split", to_json(c.split)},
                {"mask", mask},
                {"model", to_json(c.model)},
                {"train", to_json(c.train)},
                {"ridge_penalty", c.ridge_penalty},
                {"seed", c.seed},
                {"output_dir", c.output_dir}};
}

RunConfig run_config_from_json(const json& j) {
    reject_unknown(j, {"data", "split", "mask", "model", "train", "ridge_penalty", "seed", "output_dir"}, "config");
    RunConfig c;
    if (j.contains("data")) {
        const auto& d = j.at("data");
        reject_unknown(d, {"path", "time_column", "columns", "standardize"}, "data");
        read(d, "path", c.data.path, "data");
        read(d, "time_column", c.data.time_column, "data");
        read(d, "columns", c.data.columns, "data");
        read(d, "standardize", c.data.standardize, "data");
    }
    if (j.contains("split")) c.split = split_spec_from_json(j.at("split"));
    if (j.contains("mask")) {
        const auto& m = j.at("mask");
        reject_unknown(m, {"pattern", "rate", "lt", "lc", "seed", "file"}, "mask");
        std::string pattern = "point";
        read(m, "pattern", pattern, "mask");
        c.mask.spec.pattern = parse_pattern(pattern);
        read(m, "rate", c.mask.spec.rate, "mask");
        read(m, "lt", c.mask.spec.lt, "mask");
        read(m, "lc", c.mask.spec.lc, "mask");
        if (m.contains("seed") && !m.at("seed").is_null()) {
            read(m, "seed", c.mask.spec.seed, "mask");
            c.mask.seed_from_root = false;
        }
        read(m, "file", c.mask.file, "mask");
    }
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    read(j, "ridge_penalty", c.ridge_penalty, "config");
    read(j, "seed", c.seed, "config");
    read(j, "output_dir", c.output_dir, "config");
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::usage, "cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail(ErrorKind::config, path.string() + ": invalid JSON (" + e.what() + ")");
    }
    return run_config_from_json(j);
}

void save_run_config(const RunConfig& c, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::data, "cannot write " + path.string());
    out << to_json(c).dump(2) << '\n';
}

json to_json(const EvalMetrics& m) {
    return json{{"mae", m.mae},
                {"mse", m.mse},
                {"observed", m.observed},
                {"imputation_mae", m.imputation_mae},
                {"imputation_count", m.imputation_count},
                {"windows", m.windows}};
}

json to_json(const TrainReport& r) {
    json epochs = json::array();
    for (const auto& e : r.epochs)
        epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_mae", e.val_mae}, {"val_mse", e.val_mse}});
    // Wall-clock time is kept out of the report so reruns stay byte-identical.
    return json{{"epochs", epochs},
                {"best_epoch", r.best_epoch},
                {"best_val_mae", r.best_val_mae},
                {"stopped_early", r.stopped_early},
                {"test", to_json(r.test)},
                {"parameter_count", r.parameter_count}};
}

std::string epochs_csv(const TrainReport& r) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,train_loss,val_mae,val_mse\n";
    for (const auto& e : r.epochs) os << e.epoch << ',' << e.train_loss << ',' << e.val_mae << ',' << e.val_mse << '\n';
    return os.str();
}

}  // namespace coifnet
