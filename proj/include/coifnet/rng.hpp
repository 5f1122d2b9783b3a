#pragma once

// Portable PRNG used for every random draw in the library.
//
// Seeding: the 64-bit seed is expanded into the four xoshiro256** state words
// by four successive splitmix64 outputs. Doubles are drawn as (next() >> 11) * 2^-53,
// integers in [0, n) by rejection: draws below (2^64 - n) % n are discarded, the
// first accepted draw x yields x % n. Any language reproducing these three rules
// reproduces every mask, initialization, shuffle and dropout pattern bit-exactly.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace coifnet {

inline std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Independent sub-stream seeds derived from one root seed.
enum class Stream : std::uint64_t {
    mask = 1,
    init = 2,
    shuffle = 3,
    dropout = 4,
    synth = 5,
};

inline std::uint64_t derive_seed(std::uint64_t root, Stream stream) noexcept {
    std::uint64_t s = root ^ (static_cast<std::uint64_t>(stream) * 0xD1B54A32D192ED03ULL);
    return splitmix64(s);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) noexcept { reseed(seed); }

    void reseed(std::uint64_t seed) noexcept {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next() noexcept {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n); n must be > 0.
    std::uint64_t below(std::uint64_t n) noexcept {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t x = next();
            if (x >= threshold) return x % n;
        }
    }

    // Standard normal via Box-Muller; consumes exactly two uniforms.
    double normal() noexcept {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::array<std::uint64_t, 4> state() const noexcept { return state_; }
    void set_state(const std::array<std::uint64_t, 4>& s) noexcept { state_ = s; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

    std::array<std::uint64_t, 4> state_{};
};

}  // namespace coifnet
