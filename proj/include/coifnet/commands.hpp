#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "coifnet/checkpoint.hpp"
#include "coifnet/dataset.hpp"
#include "coifnet/masking.hpp"
#include "coifnet/run_config.hpp"
#include "coifnet/training.hpp"

namespace coifnet {

namespace fs = std::filesystem;

void cmd_synth(const SynthSpec& spec, const fs::path& out);

struct MaskOptions {
    MaskSpec spec;
    fs::path in;
    std::string time_column = "date";
    fs::path out;
};

Mask cmd_mask(const MaskOptions& opt);

// Dataset, mask and prepared splits for a resolved run config.
struct LoadedExperiment {
    SeriesDataset raw;
    Mask mask;
    ExperimentData data;
};

LoadedExperiment load_experiment(const RunConfig& cfg);

// Output file names inside a run directory.
inline constexpr const char* kCheckpointFile = "checkpoint.cfck";
inline constexpr const char* kReportFile = "report.json";
inline constexpr const char* kEpochsFile = "epochs.csv";
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kTimingFile = "timing.json";
inline constexpr const char* kBaselineFile = "baseline.json";
inline constexpr const char* kMaskFile = "mask.cfmk";

// Resolves `cfg`, trains, and writes checkpoint, report, epoch CSV, baseline
// metrics, the applied mask, timing and the resolved config into cfg.output_dir.
TrainResult cmd_train(RunConfig cfg);

struct EvalOptions {
    fs::path checkpoint;
    fs::path dataset;
    std::optional<fs::path> mask;       // applied to `dataset` when present
    std::optional<fs::path> reference;  // complete series to score against
    std::string time_column = "date";
    std::optional<fs::path> out;
};

EvalMetrics cmd_eval(const EvalOptions& opt);

struct ReportOptions {
    fs::path run_dir;
    std::vector<std::size_t> windows{0};  // indices into the test windows
    std::vector<std::size_t> variates;    // empty = all
    std::optional<fs::path> out_dir;      // defaults to <run_dir>/curves
};

// Writes curve_w<window>_v<variate>.csv files; returns their paths.
std::vector<fs::path> cmd_report(const ReportOptions& opt);

std::vector<SweepRow> cmd_sweep_lambda(RunConfig cfg, const std::vector<double>& lambdas);

}  // namespace coifnet
