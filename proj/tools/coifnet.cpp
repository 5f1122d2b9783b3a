#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coifnet/alloc.hpp"
#include "coifnet/commands.hpp"
#include "coifnet/errors.hpp"

using namespace coifnet;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

RunConfig config_from_flags(const Globals& g, const std::string& data, const std::vector<std::string>& ablations) {
    RunConfig cfg;
    if (!g.config.empty()) cfg = load_run_config(g.config);
    else if (data.empty()) fail(ErrorKind::usage, "either --config or --data is required");
    if (!data.empty()) cfg.data.path = data;
    if (g.seed) cfg.seed = *g.seed;
    if (!g.out.empty()) cfg.output_dir = g.out;
    for (const auto& a : ablations) cfg.model.ablations.apply(a);
    return cfg;
}

std::vector<std::size_t> to_indices(const std::vector<long long>& v, const char* what) {
    std::vector<std::size_t> out;
    for (auto x : v) {
        if (x < 0) fail(ErrorKind::usage, std::string(what) + " indices must be non-negative");
        out.push_back(static_cast<std::size_t>(x));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    tune_allocator();

    CLI::App app{"CoIFNet: forecasting multivariate series with missing values"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "Run configuration (JSON)");
    app.add_option("--seed", g.seed, "Root seed");
    app.add_option("--out", g.out, "Output file or directory");

    // synth
    SynthSpec synth;
    auto* c_synth = app.add_subcommand("synth", "Write a synthetic sinusoid-mixture dataset as CSV");
    c_synth->add_option("--t", synth.length, "Rows")->check(CLI::PositiveNumber);
    c_synth->add_option("--d", synth.width, "Variates")->check(CLI::PositiveNumber);
    c_synth->add_option("--noise", synth.noise, "Gaussian noise scale")->check(CLI::NonNegativeNumber);
    c_synth->add_option("--drift", synth.drift, "Random-walk level drift scale")->check(CLI::NonNegativeNumber);

    // mask
    MaskOptions mask_opt;
    std::string pattern = "point";
    std::string mask_in;
    auto* c_mask = app.add_subcommand("mask", "Simulate missingness over a dataset and save the mask");
    c_mask->add_option("--pattern", pattern, "point or block")->check(CLI::IsMember({"point", "block"}));
    c_mask->add_option("--rate", mask_opt.spec.rate, "Target missing fraction")->check(CLI::Range(0.0, 1.0));
    c_mask->add_option("--lt", mask_opt.spec.lt, "Max block length")->check(CLI::PositiveNumber);
    c_mask->add_option("--lc", mask_opt.spec.lc, "Max block width")->check(CLI::PositiveNumber);
    c_mask->add_option("--in", mask_in, "Dataset CSV")->required();
    c_mask->add_option("--time-column", mask_opt.time_column, "Timestamp column");

    // train
    std::string train_data;
    std::vector<std::string> ablations;
    auto* c_train = app.add_subcommand("train", "Train a model from a run configuration");
    c_train->add_option("--data", train_data, "Dataset CSV (overrides the config)");
    c_train->add_option("--ablation", ablations, "Disable a component (repeatable)")
        ->check(CLI::IsMember({"no_mask", "no_timestamps", "no_ctf", "no_cvf", "no_revon", "revin", "forecast_only"}));

    // eval
    EvalOptions eval_opt;
    std::string eval_ck, eval_data, eval_mask, eval_ref;
    auto* c_eval = app.add_subcommand("eval", "Score a checkpoint on the test split of a dataset");
    c_eval->add_option("--checkpoint", eval_ck, "Checkpoint file")->required();
    c_eval->add_option("--data", eval_data, "Dataset CSV")->required();
    c_eval->add_option("--mask", eval_mask, "Mask file applied to the dataset");
    c_eval->add_option("--reference", eval_ref, "Complete dataset to score against");
    c_eval->add_option("--time-column", eval_opt.time_column, "Timestamp column");

    // report
    ReportOptions report_opt;
    std::string run_dir;
    std::vector<long long> windows{0}, variates;
    auto* c_report = app.add_subcommand("report", "Emit forecast-curve CSVs for test windows");
    c_report->add_option("--run", run_dir, "Run directory written by train")->required();
    c_report->add_option("--windows", windows, "Test window indices")->delimiter(',');
    c_report->add_option("--variates", variates, "Variate indices (default all)")->delimiter(',');

    // sweep-lambda
    std::string sweep_data;
    std::vector<double> lambdas{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    auto* c_sweep = app.add_subcommand("sweep-lambda", "Train once per lambda and tabulate test error");
    c_sweep->add_option("--data", sweep_data, "Dataset CSV (overrides the config)");
    c_sweep->add_option("--lambdas", lambdas, "Comma-separated lambda values")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_code(ErrorKind::usage);
    }

    try {
        if (*c_synth) {
            if (g.seed) synth.seed = *g.seed;
            cmd_synth(synth, g.out);
            std::cout << "wrote " << synth.length << " rows x " << synth.width << " variates to " << g.out << '\n';
        } else if (*c_mask) {
            mask_opt.spec.pattern = parse_pattern(pattern);
            if (g.seed) mask_opt.spec.seed = *g.seed;
            mask_opt.in = mask_in;
            mask_opt.out = g.out;
            const Mask m = cmd_mask(mask_opt);
            std::printf("missing fraction %.6f\n", m.missing_fraction());
        } else if (*c_train) {
            const RunConfig cfg = config_from_flags(g, train_data, ablations);
            const TrainResult r = cmd_train(cfg);
            std::printf("best epoch %zu  val mae %.6f  test mae %.6f  test mse %.6f\n", r.report.best_epoch,
                        r.report.best_val_mae, r.report.test.mae, r.report.test.mse);
        } else if (*c_eval) {
            eval_opt.checkpoint = eval_ck;
            eval_opt.dataset = eval_data;
            if (!eval_mask.empty()) eval_opt.mask = eval_mask;
            if (!eval_ref.empty()) eval_opt.reference = eval_ref;
            if (!g.out.empty()) eval_opt.out = g.out;
            const EvalMetrics m = cmd_eval(eval_opt);
            std::printf("test mae %.10g  test mse %.10g  windows %zu\n", m.mae, m.mse, m.windows);
            if (eval_opt.mask || eval_opt.reference) std::printf("imputation mae %.10g\n", m.imputation_mae);
        } else if (*c_report) {
            report_opt.run_dir = run_dir;
            report_opt.windows = to_indices(windows, "window");
            report_opt.variates = to_indices(variates, "variate");
            if (!g.out.empty()) report_opt.out_dir = g.out;
            for (const auto& p : cmd_report(report_opt)) std::cout << p.string() << '\n';
        } else if (*c_sweep) {
            const RunConfig cfg = config_from_flags(g, sweep_data, {});
            for (const auto& row : cmd_sweep_lambda(cfg, lambdas))
                std::printf("lambda %.3f  mae %.6f  mse %.6f\n", row.lambda, row.mae, row.mse);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
