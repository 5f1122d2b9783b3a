#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "coifnet/dataset.hpp"
#include "coifnet/model.hpp"
#include "coifnet/training.hpp"

namespace coifnet {

// Binary layout:
//   "CFCK" | u8 version | u64 header length | header JSON | f64 payload | u64 FNV-1a
// All integers and doubles are little-endian. The header lists every tensor
// (section, name, shape) in payload order: parameters, then Adam m, then Adam v.
struct Checkpoint {
    ModelConfig model;
    TrainConfig train;
    SplitSpec split;
    std::optional<Standardizer> scaler;
    CoifNetParams params;
    AdamState adam;
    std::uint64_t epoch = 0;
    std::array<std::uint64_t, 4> shuffle_rng{};
    std::array<std::uint64_t, 4> dropout_rng{};
    nlohmann::json run_config;  // resolved run configuration, may be null
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(const unsigned char* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace coifnet
