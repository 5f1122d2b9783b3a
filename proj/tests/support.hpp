#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include <unistd.h>

#include "coifnet/autodiff.hpp"
#include "coifnet/rng.hpp"
#include "coifnet/tensor.hpp"

namespace testing {

using coifnet::Rng;
using coifnet::Shape;
using coifnet::Tensor;
namespace ad = coifnet::ad;

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
    Tensor t(std::move(shape), 0.0);
    for (auto& v : t.storage()) v = rng.uniform(lo, hi);
    return t;
}

inline Tensor random_mask(Shape shape, Rng& rng, double keep = 0.7) {
    Tensor t(std::move(shape), 0.0);
    for (auto& v : t.storage()) v = rng.uniform() < keep ? 1.0 : 0.0;
    return t;
}

inline double rel_error(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Builds a scalar loss on a fresh tape from leaf variables holding `inputs`.
using LossBuilder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

struct GradCheck {
    double max_rel = 0.0;
    std::size_t checked = 0;
};

// Central differences (step h) on every element of every input, compared with
// the tape gradient. `skip(input, element, value)` excludes kinks.
inline GradCheck check_gradients(const LossBuilder& build, const std::vector<Tensor>& inputs, double h = 1e-5,
                                 const std::function<bool(std::size_t, std::size_t, double)>& skip = {}) {
    const auto evaluate = [&](const std::vector<Tensor>& xs) {
        ad::Tape tape;
        std::vector<ad::Var> vars;
        for (const auto& x : xs) vars.push_back(tape.variable(x));
        return build(tape, vars).value()[0];
    };

    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& x : inputs) vars.push_back(tape.variable(x));
    const ad::Var loss = build(tape, vars);
    tape.backward(loss);

    GradCheck out;
    std::vector<Tensor> probe = inputs;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor analytic = tape.grad(vars[k]);
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double x0 = inputs[k][i];
            if (skip && skip(k, i, x0)) continue;
            probe[k][i] = x0 + h;
            const double up = evaluate(probe);
            probe[k][i] = x0 - h;
            const double down = evaluate(probe);
            probe[k][i] = x0;
            const double numeric = (up - down) / (2.0 * h);
            out.max_rel = std::max(out.max_rel, rel_error(analytic[i], numeric));
            ++out.checked;
        }
    }
    return out;
}

// Reduces any tensor output to a scalar with fixed random weights so every
// output element carries a distinct upstream gradient.
inline ad::Var weighted_sum(ad::Tape& tape, const ad::Var& x, std::uint64_t seed = 99) {
    Rng rng(seed);
    return ad::sum(ad::mul(x, tape.constant(random_tensor(x.shape(), rng, 0.5, 1.5))));
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("coifnet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace testing
