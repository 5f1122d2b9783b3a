#include "coifnet/commands.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <sstream>

#include "coifnet/errors.hpp"
#include "coifnet/model.hpp"
#include "coifnet/rng.hpp"

namespace coifnet {

using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::data, "cannot write " + path.string());
    out << text;
    if (!out) fail(ErrorKind::data, "short write to " + path.string());
}

void require_file(const fs::path& path, const char* what) {
    if (path.empty()) fail(ErrorKind::usage, std::string(what) + " path is required");
    if (!fs::is_regular_file(path)) fail(ErrorKind::usage, std::string(what) + " not found: " + path.string());
}

std::string shortest(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

SeriesDataset load_dataset(const fs::path& path, const std::string& time_column,
                           const std::vector<std::string>& columns) {
    require_file(path, "dataset");
    return load_csv(path, time_column, columns);
}

Mask check_mask_shape(Mask mask, const SeriesDataset& ds, const fs::path& path) {
    if (mask.rows != ds.length || mask.cols != ds.width) {
        fail(ErrorKind::usage, "mask " + path.string() + " is " + std::to_string(mask.rows) + "x" +
                                   std::to_string(mask.cols) + " but the dataset is " + std::to_string(ds.length) +
                                   "x" + std::to_string(ds.width));
    }
    return mask;
}

Mask all_observed(const SeriesDataset& ds) {
    Mask m;
    m.rows = ds.length;
    m.cols = ds.width;
    m.bits.assign(ds.length * ds.width, 1);
    return m;
}

}  // namespace

void cmd_synth(const SynthSpec& spec, const fs::path& out) {
    if (out.empty()) fail(ErrorKind::usage, "synth: --out is required");
    write_csv(synthesize(spec), out);
}

Mask cmd_mask(const MaskOptions& opt) {
    if (opt.out.empty()) fail(ErrorKind::usage, "mask: --out is required");
    const SeriesDataset ds = load_dataset(opt.in, opt.time_column, {});
    opt.spec.validate(ds.width);
    Mask mask = generate_mask(opt.spec, ds.length, ds.width);
    save_mask(mask, opt.out);
    return mask;
}

LoadedExperiment load_experiment(const RunConfig& cfg) {
    LoadedExperiment e;
    e.raw = load_dataset(cfg.data.path, cfg.data.time_column, cfg.data.columns);
    if (!cfg.mask.file.empty()) {
        require_file(cfg.mask.file, "mask file");
        e.mask = check_mask_shape(load_mask(cfg.mask.file), e.raw, cfg.mask.file);
    } else {
        cfg.mask.spec.validate(e.raw.width);
        e.mask = generate_mask(cfg.mask.spec, e.raw.length, e.raw.width);
    }
    if (cfg.model.width != e.raw.width) {
        fail(ErrorKind::config, "model width " + std::to_string(cfg.model.width) + " does not match the " +
                                    std::to_string(e.raw.width) + " dataset columns");
    }
    e.data = prepare_experiment(e.raw, e.mask, cfg.split, cfg.model.lookback + cfg.model.horizon,
                                cfg.data.standardize);
    return e;
}

TrainResult cmd_train(RunConfig cfg) {
    require_file(cfg.data.path, "dataset");
    {
        // Width comes from the data header; everything else from the config.
        const SeriesDataset probe = load_csv(cfg.data.path, cfg.data.time_column, cfg.data.columns);
        cfg.model.width = probe.width;
        if (cfg.data.columns.empty()) cfg.data.columns = probe.variate_names;
    }
    cfg.resolve();
    const fs::path dir = cfg.output_dir;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::data, "cannot create output directory " + dir.string() + ": " + ec.message());
    save_run_config(cfg, dir / kConfigFile);

    const LoadedExperiment e = load_experiment(cfg);
    save_mask(e.mask, dir / kMaskFile);
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult result = train(cfg.model, cfg.train, e.data);
    const auto t1 = std::chrono::steady_clock::now();
    const EvalMetrics base = baseline_two_stage(e.data, cfg.model.lookback, cfg.model.horizon, cfg.ridge_penalty,
                                                cfg.train.stride);

    Checkpoint ck;
    ck.model = cfg.model;
    ck.train = cfg.train;
    ck.split = cfg.split;
    ck.scaler = e.data.scaler;
    ck.params = result.params;
    ck.adam = result.adam;
    ck.epoch = result.epoch;
    ck.shuffle_rng = result.shuffle_rng;
    ck.dropout_rng = result.dropout_rng;
    // Where the run was written is not part of the model.
    ck.run_config = to_json(cfg);
    ck.run_config.erase("output_dir");
    save_checkpoint(ck, dir / kCheckpointFile);

    json report = to_json(result.report);
    report["mask_missing_fraction"] = e.mask.missing_fraction();
    write_text(dir / kReportFile, report.dump(2) + "\n");
    write_text(dir / kEpochsFile, epochs_csv(result.report));
    write_text(dir / kBaselineFile, json{{"model", "mean_impute_ridge"}, {"test", to_json(base)}}.dump(2) + "\n");
    const double secs = std::chrono::duration<double>(t1 - t0).count();
    write_text(dir / kTimingFile, json{{"train_seconds", secs}}.dump(2) + "\n");
    result.report.wall_clock_seconds = secs;
    return result;
}

EvalMetrics cmd_eval(const EvalOptions& opt) {
    require_file(opt.checkpoint, "checkpoint");
    const Checkpoint ck = load_checkpoint(opt.checkpoint);
    std::vector<std::string> columns;
    if (ck.run_config.is_object()) columns = run_config_from_json(ck.run_config).data.columns;

    SeriesDataset ds = load_dataset(opt.dataset, opt.time_column, {});
    if (!columns.empty()) {
        for (const auto& c : columns)
            if (std::find(ds.variate_names.begin(), ds.variate_names.end(), c) == ds.variate_names.end())
                fail(ErrorKind::usage, opt.dataset.string() + " lacks column '" + c + "' used by the checkpoint");
        ds = load_csv(opt.dataset, opt.time_column, columns);
    }
    if (ds.width != ck.model.width) {
        fail(ErrorKind::usage, "checkpoint expects " + std::to_string(ck.model.width) + " variates but " +
                                   opt.dataset.string() + " has " + std::to_string(ds.width));
    }
    const Mask mask = opt.mask ? check_mask_shape(load_mask(*opt.mask), ds, *opt.mask) : all_observed(ds);
    const SeriesDataset input = apply_mask(ds, mask);
    SeriesDataset target = ds;
    if (opt.reference) {
        target = load_dataset(*opt.reference, opt.time_column, columns);
        if (target.length != ds.length || target.width != ds.width)
            fail(ErrorKind::usage, "reference " + opt.reference->string() + " does not match the dataset shape");
    }
    const ExperimentData data = prepare_experiment(input, target, ck.split, ck.model.lookback + ck.model.horizon,
                                                   false, ck.scaler ? &*ck.scaler : nullptr);
    const EvalMetrics m = evaluate(ck.params, ck.model, data.test, ck.train.eval_batch_size, ck.train.stride);
    if (opt.out) {
        json j = to_json(m);
        if (!opt.reference && !opt.mask) {
            j.erase("imputation_mae");
            j.erase("imputation_count");
        }
        write_text(*opt.out, j.dump(2) + "\n");
    }
    return m;
}

std::vector<fs::path> cmd_report(const ReportOptions& opt) {
    const fs::path ck_path = opt.run_dir / kCheckpointFile;
    require_file(ck_path, "checkpoint");
    require_file(opt.run_dir / kConfigFile, "run config");
    const RunConfig cfg = load_run_config(opt.run_dir / kConfigFile);
    const Checkpoint ck = load_checkpoint(ck_path);

    const SeriesDataset raw = load_dataset(cfg.data.path, cfg.data.time_column, cfg.data.columns);
    const Mask mask = cfg.mask.file.empty() ? generate_mask(cfg.mask.spec, raw.length, raw.width)
                                            : check_mask_shape(load_mask(cfg.mask.file), raw, cfg.mask.file);
    const std::size_t L = ck.model.lookback, H = ck.model.horizon, D = ck.model.width;
    const ExperimentData data = prepare_experiment(apply_mask(raw, mask), raw, ck.split, L + H, false,
                                                   ck.scaler ? &*ck.scaler : nullptr);
    const auto starts = window_starts(data.test.input.length, L, H);
    const std::size_t offset = raw.length - data.test.input.length;

    std::vector<std::size_t> variates = opt.variates;
    if (variates.empty())
        for (std::size_t d = 0; d < D; ++d) variates.push_back(d);
    for (auto d : variates)
        if (d >= D) fail(ErrorKind::usage, "variate " + std::to_string(d) + " out of range (D=" + std::to_string(D) + ")");
    for (auto w : opt.windows)
        if (w >= starts.size())
            fail(ErrorKind::usage, "window " + std::to_string(w) + " out of range (" + std::to_string(starts.size()) +
                                       " test windows)");

    const fs::path out_dir = opt.out_dir ? *opt.out_dir : opt.run_dir / "curves";
    fs::create_directories(out_dir);
    const auto unscale = [&](double v, std::size_t d) {
        return ck.scaler ? v * ck.scaler->scale[d] + ck.scaler->mean[d] : v;
    };

    std::vector<fs::path> written;
    Rng unused(0);
    for (auto w : opt.windows) {
        const std::size_t s = starts[w];
        const WindowBatch batch = collate(data.test.input, data.test.target, std::span(&s, 1), L, H);
        const ForwardOutput fwd = forward(batch, ck.params, ck.model, false, unused);
        for (auto d : variates) {
            std::ostringstream os;
            os << "t,ground_truth,prediction,observed_flag\n";
            for (std::size_t j = 0; j < H; ++j) {
                const std::size_t local = s + L + j;
                os << offset + local << ',';
                if (data.test.target.is_observed(local, d)) os << shortest(unscale(data.test.target.value(local, d), d));
                os << ',' << shortest(unscale(fwd.Yhat(0, j, d), d)) << ','
                   << (data.test.input.is_observed(local, d) ? 1 : 0) << '\n';
            }
            const fs::path p = out_dir / ("curve_w" + std::to_string(w) + "_v" + std::to_string(d) + ".csv");
            write_text(p, os.str());
            written.push_back(p);
        }
    }
    return written;
}

std::vector<SweepRow> cmd_sweep_lambda(RunConfig cfg, const std::vector<double>& lambdas) {
    if (lambdas.empty()) fail(ErrorKind::usage, "sweep-lambda: no lambda values given");
    require_file(cfg.data.path, "dataset");
    {
        const SeriesDataset probe = load_csv(cfg.data.path, cfg.data.time_column, cfg.data.columns);
        cfg.model.width = probe.width;
        if (cfg.data.columns.empty()) cfg.data.columns = probe.variate_names;
    }
    cfg.resolve();
    const LoadedExperiment e = load_experiment(cfg);
    auto rows = lambda_sweep(lambdas, cfg.model, cfg.train, e.data);
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    save_run_config(cfg, dir / kConfigFile);
    write_text(dir / "sweep.csv", sweep_csv(rows));
    return rows;
}

}  // namespace coifnet
