#include "coifnet/masking.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "coifnet/errors.hpp"
#include "coifnet/rng.hpp"

namespace coifnet {

std::string to_string(MissingPattern p) { return p == MissingPattern::point ? "point" : "block"; }

MissingPattern parse_pattern(const std::string& text) {
    if (text == "point") return MissingPattern::point;
    if (text == "block") return MissingPattern::block;
    fail(ErrorKind::config, "unknown missing pattern '" + text + "' (expected point or block)");
}

void MaskSpec::validate(std::size_t width) const {
    if (!(rate >= 0.0 && rate <= 1.0)) fail(ErrorKind::config, "mask rate must lie in [0, 1]");
    if (pattern == MissingPattern::block) {
        if (lt < 1 || lc < 1) fail(ErrorKind::config, "block extents l_t and l_c must be >= 1");
        if (lc > width) {
            fail(ErrorKind::config, "block width l_c=" + std::to_string(lc) + " exceeds D=" + std::to_string(width));
        }
    }
}

double Mask::missing_fraction() const {
    if (bits.empty()) return 0.0;
    const auto observed = static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
    return static_cast<double>(bits.size() - observed) / static_cast<double>(bits.size());
}

Mask generate_point_mask(std::size_t rows, std::size_t cols, double rate, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate <= 1.0)) fail(ErrorKind::config, "mask rate must lie in [0, 1]");
    Mask m;
    m.pattern = MissingPattern::point;
    m.rate = rate;
    m.seed = seed;
    m.rows = rows;
    m.cols = cols;
    m.bits.assign(rows * cols, 1);
    Rng rng(seed);
    for (auto& bit : m.bits) bit = rng.uniform() < rate ? 0 : 1;
    return m;
}

Mask generate_block_mask(std::size_t rows, std::size_t cols, double rate, std::size_t lt, std::size_t lc,
                         std::uint64_t seed) {
    MaskSpec{MissingPattern::block, rate, lt, lc, seed}.validate(cols);
    Mask m;
    m.pattern = MissingPattern::block;
    m.rate = rate;
    m.seed = seed;
    m.rows = rows;
    m.cols = cols;
    m.bits.assign(rows * cols, 1);
    const std::size_t total = rows * cols;
    if (total == 0) return m;
    std::size_t missing = 0;
    Rng rng(seed);
    // Compare counts, not fractions, so the stopping rule is exact.
    const auto reached = [&] { return static_cast<double>(missing) >= rate * static_cast<double>(total); };
    while (!reached()) {
        const std::size_t t0 = rng.below(rows);
        const std::size_t c0 = rng.below(cols);
        const std::size_t len = 1 + rng.below(lt);
        const std::size_t wid = 1 + rng.below(lc);
        const std::size_t t1 = std::min(rows, t0 + len);
        const std::size_t c1 = std::min(cols, c0 + wid);
        for (std::size_t t = t0; t < t1; ++t) {
            for (std::size_t c = c0; c < c1; ++c) {
                auto& bit = m.bits[t * cols + c];
                missing += bit;
                bit = 0;
            }
        }
        ++m.blocks_drawn;
    }
    return m;
}

Mask generate_mask(const MaskSpec& spec, std::size_t rows, std::size_t cols) {
    spec.validate(cols);
    if (spec.pattern == MissingPattern::point) return generate_point_mask(rows, cols, spec.rate, spec.seed);
    return generate_block_mask(rows, cols, spec.rate, spec.lt, spec.lc, spec.seed);
}

SeriesDataset apply_mask(const SeriesDataset& ds, const Mask& mask) {
    if (mask.rows != ds.length || mask.cols != ds.width) {
        fail(ErrorKind::dimension, "mask shape " + std::to_string(mask.rows) + "x" + std::to_string(mask.cols) +
                                       " does not match dataset " + std::to_string(ds.length) + "x" +
                                       std::to_string(ds.width));
    }
    SeriesDataset out = ds;
    for (std::size_t i = 0; i < out.observed.size(); ++i) {
        out.observed[i] = static_cast<std::uint8_t>(out.observed[i] & mask.bits[i]);
        if (!out.observed[i]) out.values[i] = 0.0;
    }
    return out;
}

// ----------------------------------------------------------------------------
// Persistence

namespace {

constexpr char kMagic[4] = {'C', 'F', 'M', 'K'};
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 1 + 1 + 8 * 5;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

void save_mask(const Mask& mask, const std::filesystem::path& path) {
    std::vector<std::uint8_t> buf(kMagic, kMagic + 4);
    buf.push_back(kVersion);
    buf.push_back(static_cast<std::uint8_t>(mask.pattern));
    put_u64(buf, std::bit_cast<std::uint64_t>(mask.rate));
    put_u64(buf, std::bit_cast<std::uint64_t>(mask.missing_fraction()));
    put_u64(buf, mask.seed);
    put_u64(buf, mask.rows);
    put_u64(buf, mask.cols);
    const std::size_t n = mask.rows * mask.cols;
    std::vector<std::uint8_t> packed((n + 7) / 8, 0);
    for (std::size_t i = 0; i < n; ++i)
        if (mask.bits[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    buf.insert(buf.end(), packed.begin(), packed.end());

    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::data, "cannot write mask file " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) fail(ErrorKind::data, "write failed for " + path.string());
}

Mask load_mask(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::data, "cannot open mask file " + path.string());
    const std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < kHeaderBytes || std::memcmp(buf.data(), kMagic, 4) != 0) {
        fail(ErrorKind::data, path.string() + ": not a mask file (bad header)");
    }
    if (buf[4] != kVersion) fail(ErrorKind::data, path.string() + ": unsupported mask version " + std::to_string(buf[4]));
    if (buf[5] > 1) fail(ErrorKind::data, path.string() + ": unknown pattern byte");
    Mask m;
    m.pattern = static_cast<MissingPattern>(buf[5]);
    m.rate = std::bit_cast<double>(get_u64(&buf[6]));
    const double achieved = std::bit_cast<double>(get_u64(&buf[14]));
    m.seed = get_u64(&buf[22]);
    m.rows = get_u64(&buf[30]);
    m.cols = get_u64(&buf[38]);
    if (m.cols != 0 && m.rows > (std::uint64_t{1} << 40) / m.cols) fail(ErrorKind::data, path.string() + ": implausible shape");
    const std::size_t n = m.rows * m.cols;
    if (buf.size() != kHeaderBytes + (n + 7) / 8) {
        fail(ErrorKind::data, path.string() + ": bitmap size does not match header shape " + std::to_string(m.rows) + "x" +
                                  std::to_string(m.cols));
    }
    m.bits.resize(n);
    const std::uint8_t* packed = buf.data() + kHeaderBytes;
    for (std::size_t i = 0; i < n; ++i) m.bits[i] = (packed[i / 8] >> (i % 8)) & 1u;
    if (m.missing_fraction() != achieved) fail(ErrorKind::data, path.string() + ": achieved fraction disagrees with bitmap");
    return m;
}

}  // namespace coifnet
