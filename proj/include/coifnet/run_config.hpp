#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coifnet/dataset.hpp"
#include "coifnet/masking.hpp"
#include "coifnet/model.hpp"
#include "coifnet/training.hpp"

namespace coifnet {

struct DataSection {
    std::string path;
    std::string time_column = "date";
    std::vector<std::string> columns;  // empty = all non-time columns
    bool standardize = true;
};

struct MaskSection {
    MaskSpec spec;
    bool seed_from_root = true;  // derive spec.seed from the root seed
    std::string file;            // persisted mask; overrides spec when set
};

// Everything needed to rerun an experiment. Serialized with every default
// filled in so the file alone reproduces the run.
struct RunConfig {
    DataSection data;
    SplitSpec split;
    MaskSection mask;
    ModelConfig model;  // model.width is taken from the dataset
    TrainConfig train;
    double ridge_penalty = 1e-3;
    std::uint64_t seed = 0;
    std::string output_dir = "run";

    // Applies derived fields (mask seed, train seed) and checks every invariant.
    void resolve();
    void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SplitSpec& s);
SplitSpec split_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
// Missing keys take defaults; unknown keys and wrong types are config errors.
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& c, const std::filesystem::path& path);

nlohmann::json to_json(const TrainReport& r);
nlohmann::json to_json(const EvalMetrics& m);
std::string epochs_csv(const TrainReport& r);

}  // namespace coifnet
