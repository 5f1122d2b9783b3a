#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "coifnet/dataset.hpp"

namespace coifnet {

enum class MissingPattern : std::uint8_t { point = 0, block = 1 };

std::string to_string(MissingPattern p);
MissingPattern parse_pattern(const std::string& text);

struct MaskSpec {
    MissingPattern pattern = MissingPattern::point;
    double rate = 0.0;       // target missing fraction
    std::size_t lt = 10;     // max block length in time steps
    std::size_t lc = 5;      // max block width in variates
    std::uint64_t seed = 0;

    // `width` is D of the data the mask will cover.
    void validate(std::size_t width) const;
};

// T x D observation mask, row-major, 1 = observed.
struct Mask {
    MissingPattern pattern = MissingPattern::point;
    double rate = 0.0;
    std::uint64_t seed = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> bits;
    std::size_t blocks_drawn = 0;  // not persisted

    bool observed(std::size_t t, std::size_t d) const { return bits[t * cols + d] != 0; }
    // Fraction of entries marked missing.
    double missing_fraction() const;

    friend bool operator==(const Mask& a, const Mask& b) {
        return a.pattern == b.pattern && a.rate == b.rate && a.seed == b.seed && a.rows == b.rows && a.cols == b.cols &&
               a.bits == b.bits;
    }
};

// Entry (t, d) is missing when the row-major (t * D + d)-th uniform draw is < rate.
Mask generate_point_mask(std::size_t rows, std::size_t cols, double rate, std::uint64_t seed);

// Draws blocks until the missing fraction first reaches `rate`. Each block draws,
// in order, a corner row in [0, T), a corner column in [0, D), a length in
// [1, lt] and a width in [1, lc]; blocks are clipped at the matrix edge.
Mask generate_block_mask(std::size_t rows, std::size_t cols, double rate, std::size_t lt, std::size_t lc,
                         std::uint64_t seed);

Mask generate_mask(const MaskSpec& spec, std::size_t rows, std::size_t cols);

// observed' = observed * mask, values zeroed where observed' = 0.
SeriesDataset apply_mask(const SeriesDataset& ds, const Mask& mask);

// Binary layout (little-endian): "CFMK", u8 version (1), u8 pattern, f64 rate,
// f64 achieved missing fraction, u64 seed, u64 T, u64 D, then ceil(T*D/8) bytes
// of row-major bitmap with entry i at bit (i % 8) of byte i / 8, 1 = observed.
void save_mask(const Mask& mask, const std::filesystem::path& path);
Mask load_mask(const std::filesystem::path& path);

}  // namespace coifnet
