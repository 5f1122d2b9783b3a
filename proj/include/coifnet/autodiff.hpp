#pragma once

// Tape-based reverse-mode differentiation over rank-2 tensors.
//
// A Tape owns every value produced during one forward pass. Ops append a node
// holding the output value and a closure that maps the output gradient to input
// gradients; backward() replays those closures in exact reverse order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "coifnet/rng.hpp"
#include "coifnet/tensor.hpp"

namespace coifnet::ad {

class Tape;

class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t id() const noexcept { return id_; }
    Tape* tape() const noexcept { return tape_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Input that never receives a gradient.
    Var constant(Tensor value);
    // Differentiable leaf. Names must be unique on a tape.
    Var parameter(const std::string& name, Tensor value);
    // Differentiable leaf without a name (useful for gradient checks).
    Var variable(Tensor value);

    // Appends an op node; `fn` is only kept when some input requires a gradient.
    Var record(std::string op, Tensor value, std::initializer_list<Var> inputs, Backward fn);
    Var record(std::string op, Tensor value, std::span<const Var> inputs, Backward fn);

    // Reverse pass from a 1x1 loss. Gradients from a previous pass are discarded.
    void backward(const Var& loss);

    // Gradient of the last backward pass with respect to `v` (zeros if unreached).
    Tensor grad(const Var& v) const;
    // Gradients for every registered parameter, keyed by name.
    std::map<std::string, Tensor> parameter_grads() const;
    const std::map<std::string, std::size_t>& parameters() const noexcept { return parameter_ids_; }

    // Node ids visited by the last backward pass, in visit order.
    const std::vector<std::size_t>& backward_order() const noexcept { return visit_order_; }
    const std::string& op_name(std::size_t id) const { return nodes_.at(id).op; }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Used by op closures.
    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    // Accumulates `g` into the gradient buffer of node `id` when it requires one.
    void accumulate(std::size_t id, const Tensor& g);
    void accumulate(std::size_t id, Tensor&& g);
    Tensor& grad_buffer(std::size_t id);

    void check_owner(const Var& v, const char* op) const;

private:
    struct Node {
        std::string op;
        Tensor value;
        Backward backward;
        bool requires_grad = false;
        Tensor grad;
        bool has_grad = false;
    };

    std::size_t push(Node node);

    std::vector<Node> nodes_;
    std::map<std::string, std::size_t> parameter_ids_;
    std::vector<std::size_t> visit_order_;
};

enum class Elementwise { add, sub, mul, div, sigmoid, abs };

// Binary ops accept equal shapes, or `b` broadcast as a 1xn row over rows,
// an mx1 column over columns, or a 1x1 scalar.
Var elementwise(Elementwise op, const Var& a, const Var& b);
Var elementwise(Elementwise op, const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var sigmoid(const Var& a);
Var abs(const Var& a);

Var matmul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var sum(const Var& a);

// Inverted dropout. `rate` must be in [0, 1). Identity when not training.
Var dropout(const Var& x, double rate, bool training, Rng& rng);

Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
Var block_transpose(const Var& x, std::size_t blocks);
Var reshape(const Var& x, Shape shape);
// Output row i is table row indices[i].
Var gather_rows(const Var& table, std::span<const std::size_t> indices);
// Vertical stack of `times` copies of x.
Var tile_rows(const Var& x, std::size_t times);
// Each row of x repeated `times` times consecutively.
Var repeat_rows(const Var& x, std::size_t times);
// sign(x) * max(|x|, floor), with sign(0) = +1; gradient 0 where clamped.
Var clamp_abs_min(const Var& x, double floor);

}  // namespace coifnet::ad
