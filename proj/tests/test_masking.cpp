#include <doctest.h>

#include <fstream>

#include "coifnet/errors.hpp"
#include "coifnet/masking.hpp"
#include "support.hpp"

using namespace coifnet;
using testing::TempDir;

namespace {

// Lag-1 autocorrelation of the missing indicator along time, pooled over variates.
double lag1_autocorr(const Mask& m) {
    double mean = 1.0 - static_cast<double>(std::count(m.bits.begin(), m.bits.end(), 1)) / m.bits.size();
    double num = 0.0, den = 0.0;
    for (std::size_t d = 0; d < m.cols; ++d)
        for (std::size_t t = 0; t < m.rows; ++t) {
            const double x = (m.observed(t, d) ? 0.0 : 1.0) - mean;
            den += x * x;
            if (t + 1 < m.rows) num += x * ((m.observed(t + 1, d) ? 0.0 : 1.0) - mean);
        }
    return num / den;
}

SeriesDataset grid(std::size_t T, std::size_t D) {
    std::vector<std::int64_t> ts(T);
    std::vector<double> v(T * D);
    for (std::size_t t = 0; t < T; ++t) ts[t] = static_cast<std::int64_t>(t) * 3600;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 + static_cast<double>(i);
    return SeriesDataset::from_columns(ts, D, v, std::vector<std::uint8_t>(T * D, 1),
                                       std::vector<std::string>(D, "x"));
}

}  // namespace

TEST_CASE("point mask rates") {
    CHECK(generate_point_mask(50, 4, 0.0, 1).missing_fraction() == 0.0);
    CHECK(generate_point_mask(50, 4, 1.0, 1).missing_fraction() == 1.0);
    for (std::uint64_t seed = 0; seed < 5; ++seed)
        CHECK(std::abs(generate_point_mask(1000, 10, 0.3, seed).missing_fraction() - 0.3) < 0.02);
}

TEST_CASE("point mask draws one uniform per entry in row-major order") {
    const auto m = generate_point_mask(7, 3, 0.4, 21);
    Rng rng(21);
    for (std::size_t t = 0; t < 7; ++t)
        for (std::size_t d = 0; d < 3; ++d) CHECK(m.observed(t, d) == !(rng.uniform() < 0.4));
}

TEST_CASE("point mask missingness is uncorrelated in time") {
    CHECK(std::abs(lag1_autocorr(generate_point_mask(1000, 10, 0.3, 4))) < 0.03);
}

TEST_CASE("block mask rates and stopping rule") {
    const auto zero = generate_block_mask(100, 7, 0.0, 10, 5, 3);
    CHECK(zero.missing_fraction() == 0.0);
    CHECK(zero.blocks_drawn == 0);
    CHECK(generate_block_mask(10, 5, 1.0, 10, 5, 3).missing_fraction() == 1.0);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto m = generate_block_mask(500, 7, 0.3, 10, 5, seed);
        CHECK(m.missing_fraction() >= 0.3);
        CHECK(m.missing_fraction() <= 0.3 + 50.0 / 3500.0);
        CHECK(lag1_autocorr(m) > 0.0);
    }
}

TEST_CASE("block mask replays from an independent draw of the documented sequence") {
    const std::size_t T = 60, D = 6, lt = 10, lc = 5;
    const double rate = 0.25;
    const auto m = generate_block_mask(T, D, rate, lt, lc, 17);
    std::vector<std::uint8_t> bits(T * D, 1);
    std::size_t missing = 0, blocks = 0;
    Rng rng(17);
    while (static_cast<double>(missing) < rate * static_cast<double>(T * D)) {
        const std::size_t t0 = rng.below(T), c0 = rng.below(D);
        const std::size_t len = 1 + rng.below(lt), wid = 1 + rng.below(lc);
        ++blocks;
        for (std::size_t t = t0; t < std::min(T, t0 + len); ++t)
            for (std::size_t c = c0; c < std::min(D, c0 + wid); ++c)
                if (bits[t * D + c]) {
                    bits[t * D + c] = 0;
                    ++missing;
                }
    }
    CHECK(m.bits == bits);
    CHECK(m.blocks_drawn == blocks);
}

TEST_CASE("single block geometry stays within l_t x l_c") {
    // A rate just above zero stops after exactly one block.
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto m = generate_block_mask(40, 8, 1e-9, 10, 5, seed);
        REQUIRE(m.blocks_drawn == 1);
        std::size_t tmin = 40, tmax = 0, cmin = 8, cmax = 0, n = 0;
        for (std::size_t t = 0; t < 40; ++t)
            for (std::size_t c = 0; c < 8; ++c)
                if (!m.observed(t, c)) {
                    tmin = std::min(tmin, t), tmax = std::max(tmax, t);
                    cmin = std::min(cmin, c), cmax = std::max(cmax, c);
                    ++n;
                }
        CHECK(tmax - tmin + 1 <= 10);
        CHECK(cmax - cmin + 1 <= 5);
        CHECK(n == (tmax - tmin + 1) * (cmax - cmin + 1));  // solid rectangle
    }
}

TEST_CASE("mask spec validation") {
    CHECK_THROWS_AS((MaskSpec{MissingPattern::point, 1.5, 10, 5, 0}.validate(7)), Error);
    CHECK_THROWS_AS((MaskSpec{MissingPattern::block, 0.3, 0, 5, 0}.validate(7)), Error);
    CHECK_THROWS_AS((MaskSpec{MissingPattern::block, 0.3, 10, 8, 0}.validate(7)), Error);
    CHECK_NOTHROW((MaskSpec{MissingPattern::block, 0.3, 10, 5, 0}.validate(7)));
    CHECK(parse_pattern("block") == MissingPattern::block);
    CHECK_THROWS_AS(parse_pattern("stripes"), Error);
}

TEST_CASE("masks are seed-deterministic") {
    CHECK(generate_block_mask(300, 7, 0.3, 10, 5, 8) == generate_block_mask(300, 7, 0.3, 10, 5, 8));
    CHECK_FALSE(generate_block_mask(300, 7, 0.3, 10, 5, 8) == generate_block_mask(300, 7, 0.3, 10, 5, 9));
    CHECK(generate_point_mask(300, 7, 0.3, 8) == generate_point_mask(300, 7, 0.3, 8));
}

TEST_CASE("apply_mask") {
    const auto ds = grid(5, 3);
    Mask ones;
    ones.rows = 5;
    ones.cols = 3;
    ones.bits.assign(15, 1);
    const auto same = apply_mask(ds, ones);
    CHECK(same.values == ds.values);
    CHECK(same.observed == ds.observed);

    Mask zeros = ones;
    zeros.bits.assign(15, 0);
    const auto none = apply_mask(ds, zeros);
    CHECK(std::all_of(none.values.begin(), none.values.end(), [](double v) { return v == 0.0; }));
    CHECK(std::all_of(none.observed.begin(), none.observed.end(), [](auto o) { return o == 0; }));

    Mask one = ones;
    one.bits[7] = 0;
    const auto changed = apply_mask(ds, one);
    std::size_t diffs = 0;
    for (std::size_t i = 0; i < 15; ++i) diffs += (changed.values[i] != ds.values[i]) + (changed.observed[i] != ds.observed[i]);
    CHECK(diffs == 2);
    CHECK(changed.observed[7] == 0);

    Mask wrong = ones;
    wrong.rows = 4;
    wrong.bits.resize(12);
    try {
        apply_mask(ds, wrong);
        FAIL("expected a dimension error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::dimension);
    }
}

TEST_CASE("mask file round-trip and corruption") {
    TempDir dir("mask");
    for (auto pattern : {MissingPattern::point, MissingPattern::block}) {
        const auto m = generate_mask(MaskSpec{pattern, 0.3, 10, 5, 5}, 123, 7);
        save_mask(m, dir / "m.cfmk");
        CHECK(load_mask(dir / "m.cfmk") == m);
        CHECK(std::filesystem::file_size(dir / "m.cfmk") == 4 + 1 + 1 + 8 + 8 + 3 * 8 + (123 * 7 + 7) / 8);
    }
    const std::string bytes = testing::read_file(dir / "m.cfmk");
    std::ofstream(dir / "short.cfmk", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
    try {
        load_mask(dir / "short.cfmk");
        FAIL("expected a data error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::data);
    }
    std::string bad = bytes;
    bad[0] = 'X';
    std::ofstream(dir / "magic.cfmk", std::ios::binary) << bad;
    CHECK_THROWS_AS(load_mask(dir / "magic.cfmk"), Error);
    // Flip one bitmap bit: the recorded achieved fraction no longer matches.
    bad = bytes;
    bad.back() = static_cast<char>(bad.back() ^ 0x01);
    std::ofstream(dir / "flip.cfmk", std::ios::binary) << bad;
    CHECK_THROWS_AS(load_mask(dir / "flip.cfmk"), Error);
}
