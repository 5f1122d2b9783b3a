#include "coifnet/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "coifnet/errors.hpp"

namespace coifnet::ad {

const Tensor& Var::value() const {
    if (!tape_) fail(ErrorKind::usage, "use of an unbound Var");
    return tape_->value(id_);
}

// ----------------------------------------------------------------------------
// Tape

std::size_t Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
}

Var Tape::constant(Tensor value) {
    Node n;
    n.op = "constant";
    n.value = std::move(value);
    return Var(this, push(std::move(n)));
}

Var Tape::parameter(const std::string& name, Tensor value) {
    if (parameter_ids_.contains(name)) fail(ErrorKind::usage, "parameter registered twice: " + name);
    Node n;
    n.op = "parameter:" + name;
    n.value = std::move(value);
    n.requires_grad = true;
    const auto id = push(std::move(n));
    parameter_ids_.emplace(name, id);
    return Var(this, id);
}

Var Tape::variable(Tensor value) {
    Node n;
    n.op = "variable";
    n.value = std::move(value);
    n.requires_grad = true;
    return Var(this, push(std::move(n)));
}

void Tape::check_owner(const Var& v, const char* op) const {
    if (v.tape() != this) fail(ErrorKind::usage, std::string(op) + ": tensor is not on this tape");
}

Var Tape::record(std::string op, Tensor value, std::initializer_list<Var> inputs, Backward fn) {
    return record(std::move(op), std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::record(std::string op, Tensor value, std::span<const Var> inputs, Backward fn) {
    bool needs = false;
    for (const auto& in : inputs) {
        check_owner(in, op.c_str());
        needs = needs || nodes_[in.id()].requires_grad;
    }
    if (!value.all_finite()) fail(ErrorKind::numerical, op + ": produced a non-finite value");
    Node n;
    n.op = std::move(op);
    n.value = std::move(value);
    n.requires_grad = needs;
    if (needs) n.backward = std::move(fn);
    return Var(this, push(std::move(n)));
}

Tensor& Tape::grad_buffer(std::size_t id) {
    auto& n = nodes_[id];
    if (!n.has_grad) {
        n.grad = Tensor(n.value.shape(), 0.0);
        n.has_grad = true;
    }
    return n.grad;
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
    if (!nodes_[id].requires_grad) return;
    add_inplace(grad_buffer(id), g);
}

void Tape::accumulate(std::size_t id, Tensor&& g) {
    auto& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.has_grad) {
        add_inplace(n.grad, g);
        return;
    }
    if (g.shape() != n.value.shape()) fail(ErrorKind::dimension, "gradient shape mismatch for " + n.op);
    n.grad = std::move(g);
    n.has_grad = true;
}

void Tape::backward(const Var& loss) {
    check_owner(loss, "backward");
    if (loss.value().size() != 1) {
        fail(ErrorKind::usage, "backward: loss must be a scalar, got " + shape_string(loss.shape()));
    }
    for (auto& n : nodes_) {
        n.has_grad = false;
        n.grad = Tensor();
    }
    visit_order_.clear();
    grad_buffer(loss.id()).data()[0] = 1.0;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        auto& n = nodes_[id];
        if (!n.backward || !n.has_grad) continue;
        visit_order_.push_back(id);
        // Closures only write to lower ids, so n.grad stays put while it is read.
        n.backward(*this, n.grad);
    }
}

Tensor Tape::grad(const Var& v) const {
    check_owner(v, "grad");
    const auto& n = nodes_[v.id()];
    return n.has_grad ? n.grad : Tensor(n.value.shape(), 0.0);
}

std::map<std::string, Tensor> Tape::parameter_grads() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, id] : parameter_ids_) {
        const auto& n = nodes_[id];
        out.emplace(name, n.has_grad ? n.grad : Tensor(n.value.shape(), 0.0));
    }
    return out;
}

// ----------------------------------------------------------------------------
// Elementwise

namespace {

enum class Broadcast { same, row, col, scalar };

Tape& tape_of(const Var& a, const char* op) {
    if (!a.valid()) fail(ErrorKind::usage, std::string(op) + ": unbound Var");
    return *a.tape();
}

Broadcast broadcast_mode(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return Broadcast::same;
    if (a.rank() == 2 && b.rank() == 2) {
        if (b.rows() == 1 && b.cols() == 1) return Broadcast::scalar;
        if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
        if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::col;
    }
    fail(ErrorKind::dimension, std::string(op) + ": cannot combine " + shape_string(a.shape()) + " with " +
                                   shape_string(b.shape()));
}

const char* op_name(Elementwise op) {
    switch (op) {
        case Elementwise::add: return "add";
        case Elementwise::sub: return "sub";
        case Elementwise::mul: return "mul";
        case Elementwise::div: return "div";
        case Elementwise::sigmoid: return "sigmoid";
        case Elementwise::abs: return "abs";
    }
    return "?";
}

double sigmoid_scalar(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

// Calls f(i, j) for every flat index i of a (rows x cols) and the matching index j of b.
template <class F>
void for_each_pair(Broadcast mode, std::size_t rows, std::size_t cols, F&& f) {
    const std::size_t n = rows * cols;
    switch (mode) {
        case Broadcast::same:
            for (std::size_t i = 0; i < n; ++i) f(i, i);
            break;
        case Broadcast::row:
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) f(r * cols + c, c);
            break;
        case Broadcast::col:
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) f(r * cols + c, r);
            break;
        case Broadcast::scalar:
            for (std::size_t i = 0; i < n; ++i) f(i, 0);
            break;
    }
}

Var elementwise(Elementwise op, const Var& a, const Var& b) {
    const char* name = op_name(op);
    if (op == Elementwise::sigmoid || op == Elementwise::abs) fail(ErrorKind::usage, std::string(name) + " is unary");
    Tape& tape = tape_of(a, name);
    tape.check_owner(b, name);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const Broadcast mode = broadcast_mode(av, bv, name);
    const std::size_t cols = av.rank() == 2 ? av.cols() : av.size();
    const std::size_t rows = av.size() / std::max<std::size_t>(cols, 1);

    Tensor out(av.shape(), 0.0);
    const double* x = av.data().data();
    const double* y = bv.data().data();
    double* o = out.data().data();
    switch (op) {
        case Elementwise::add: for_each_pair(mode, rows, cols, [&](std::size_t i, std::size_t j) { o[i] = x[i] + y[j]; }); break;
        case Elementwise::sub: for_each_pair(mode, rows, cols, [&](std::size_t i, std::size_t j) { o[i] = x[i] - y[j]; }); break;
        case Elementwise::mul: for_each_pair(mode, rows, cols, [&](std::size_t i, std::size_t j) { o[i] = x[i] * y[j]; }); break;
        case Elementwise::div:
            for (const double d : bv.data())
                if (d == 0.0) fail(ErrorKind::numerical, "div: zero denominator");
            for_each_pair(mode, rows, cols, [&](std::size_t i, std::size_t j) { o[i] = x[i] / y[j]; });
            break;
        default: break;
    }

    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return tape.record(name, std::move(out), {a, b}, [op, ia, ib, mode, rows, cols](Tape& t, const Tensor& g) {
        const double* x = t.value(ia).data().data();
        const double* y = t.value(ib).data().data();
        const double* gp = g.data().data();
        if (t.requires_grad(ia)) {
            Tensor ga(g.shape(), 0.0);
            double* o = ga.data().data();
            switch (op) {
                case Elementwise::add:
                case Elementwise::sub: ga = g; break;
                case Elementwise::mul: for_each_pair(mode, rows, cols, [&](std::size_t i, std::size_t j) { o[i] = gp[i] * y[j]; }); break;
                case Elementwise::div: for_each_pair(mode, rows, cols, [&](std::size_t i, std::size_t j) { o[i] = gp[i] / y[j]; }); break;
                default: break;
            }
            t.accumulate(ia, std::move(ga));
        }
        if (t.requires_grad(ib)) {
            Tensor gb(t.value(ib).shape(), 0.0);
            double* o = gb.data().data();
            switch (op) {
                case Elementwise::add: for_each_pair(mode, rows, cols, [&](std::size_t i, std::size_t j) { o[j] += gp[i]; }); break;
                case Elementwise::sub: for_each_pair(mode, rows, cols, [&](std::size_t i, std::size_t j) { o[j] -= gp[i]; }); break;
                case Elementwise::mul: for_each_pair(mode, rows, cols, [&](std::size_t i, std::size_t j) { o[j] += gp[i] * x[i]; }); break;
                case Elementwise::div:
                    for_each_pair(mode, rows, cols, [&](std::size_t i, std::size_t j) { o[j] -= gp[i] * x[i] / (y[j] * y[j]); });
                    break;
                default: break;
            }
            t.accumulate(ib, std::move(gb));
        }
    });
}

Var elementwise(Elementwise op, const Var& a) {
    const char* name = op_name(op);
    if (op != Elementwise::sigmoid && op != Elementwise::abs) fail(ErrorKind::usage, std::string(name) + " is binary");
    Tape& tape = tape_of(a, name);
    const Tensor& av = a.value();
    Tensor out(av.shape(), 0.0);
    for (std::size_t i = 0; i < av.size(); ++i)
        out[i] = op == Elementwise::sigmoid ? sigmoid_scalar(av[i]) : std::abs(av[i]);

    const std::size_t ia = a.id();
    if (op == Elementwise::sigmoid) {
        const std::size_t io = tape.size();  // id the output is about to take
        return tape.record(name, std::move(out), {a}, [ia, io](Tape& t, const Tensor& g) {
            const Tensor& s = t.value(io);
            Tensor ga(s.shape(), 0.0);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * s[i] * (1.0 - s[i]);
            t.accumulate(ia, std::move(ga));
        });
    }
    return tape.record(name, std::move(out), {a}, [ia](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(ia);
        Tensor ga(x.shape(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = x[i] > 0 ? g[i] : (x[i] < 0 ? -g[i] : 0.0);
        t.accumulate(ia, std::move(ga));
    });
}

Var add(const Var& a, const Var& b) { return elementwise(Elementwise::add, a, b); }
Var sub(const Var& a, const Var& b) { return elementwise(Elementwise::sub, a, b); }
Var mul(const Var& a, const Var& b) { return elementwise(Elementwise::mul, a, b); }
Var div(const Var& a, const Var& b) { return elementwise(Elementwise::div, a, b); }
Var sigmoid(const Var& a) { return elementwise(Elementwise::sigmoid, a); }
Var abs(const Var& a) { return elementwise(Elementwise::abs, a); }

// ----------------------------------------------------------------------------
// Linear algebra and reductions

Var matmul(const Var& a, const Var& b) {
    Tape& tape = tape_of(a, "matmul");
    tape.check_owner(b, "matmul");
    Tensor out = coifnet::matmul(a.value(), b.value());
    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return tape.record("matmul", std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
        if (t.requires_grad(ia)) t.accumulate(ia, matmul_nt(g, t.value(ib)));
        if (t.requires_grad(ib)) t.accumulate(ib, matmul_tn(t.value(ia), g));
    });
}

Var scale(const Var& a, double factor) {
    Tape& tape = tape_of(a, "scale");
    Tensor out = a.value();
    for (auto& v : out.data()) v *= factor;
    const std::size_t ia = a.id();
    return tape.record("scale", std::move(out), {a}, [ia, factor](Tape& t, const Tensor& g) {
        Tensor ga = g;
        for (auto& v : ga.data()) v *= factor;
        t.accumulate(ia, std::move(ga));
    });
}

Var sum(const Var& a) {
    Tape& tape = tape_of(a, "sum");
    const std::size_t ia = a.id();
    return tape.record("sum", Tensor::scalar(a.value().sum()), {a}, [ia](Tape& t, const Tensor& g) {
        t.accumulate(ia, Tensor(t.value(ia).shape(), g[0]));
    });
}

Var dropout(const Var& x, double rate, bool training, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) fail(ErrorKind::config, "dropout: rate must be in [0, 1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;
    Tape& tape = tape_of(x, "dropout");
    const Tensor& xv = x.value();
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> factor(xv.size());
    Tensor out(xv.shape(), 0.0);
    for (std::size_t i = 0; i < xv.size(); ++i) {
        factor[i] = rng.uniform() < rate ? 0.0 : keep_scale;
        out[i] = xv[i] * factor[i];
    }
    const std::size_t ix = x.id();
    return tape.record("dropout", std::move(out), {x}, [ix, factor = std::move(factor)](Tape& t, const Tensor& g) {
        Tensor gx(g.shape(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * factor[i];
        t.accumulate(ix, std::move(gx));
    });
}

// ----------------------------------------------------------------------------
// Layout ops

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) fail(ErrorKind::usage, "concat_cols: no inputs");
    Tape& tape = tape_of(parts.front(), "concat_cols");
    const std::size_t rows = parts.front().value().rows();
    std::vector<std::size_t> widths;
    std::vector<std::size_t> ids;
    std::size_t total = 0;
    for (const auto& p : parts) {
        tape.check_owner(p, "concat_cols");
        if (p.value().rank() != 2 || p.value().rows() != rows) {
            fail(ErrorKind::dimension, "concat_cols: row count mismatch " + shape_string(parts.front().shape()) + " vs " +
                                           shape_string(p.shape()));
        }
        widths.push_back(p.value().cols());
        ids.push_back(p.id());
        total += widths.back();
    }
    Tensor out = Tensor::matrix(rows, total);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& v = parts[k].value();
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(v.data().data() + r * widths[k], widths[k], out.data().data() + r * total + offset);
        offset += widths[k];
    }
    return tape.record("concat_cols", std::move(out), parts, [ids, widths, rows, total](Tape& t, const Tensor& g) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (t.requires_grad(ids[k])) {
                Tensor& acc = t.grad_buffer(ids[k]);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < widths[k]; ++c) acc(r, c) += g[r * total + off + c];
            }
            off += widths[k];
        }
    });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
    Tape& tape = tape_of(x, "slice_cols");
    const Tensor& v = x.value();
    if (begin > end || end > v.cols()) {
        fail(ErrorKind::dimension, "slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                       ") outside " + shape_string(v.shape()));
    }
    const std::size_t rows = v.rows();
    const std::size_t width = end - begin;
    const std::size_t cols = v.cols();
    Tensor out = Tensor::matrix(rows, width);
    for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(v.data().data() + r * cols + begin, width, out.data().data() + r * width);
    const std::size_t ix = x.id();
    return tape.record("slice_cols", std::move(out), {x}, [ix, begin, width, rows](Tape& t, const Tensor& g) {
        Tensor& acc = t.grad_buffer(ix);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < width; ++c) acc(r, begin + c) += g[r * width + c];
    });
}

Var block_transpose(const Var& x, std::size_t blocks) {
    Tape& tape = tape_of(x, "block_transpose");
    Tensor out = coifnet::block_transpose(x.value(), blocks);
    const std::size_t ix = x.id();
    return tape.record("block_transpose", std::move(out), {x}, [ix, blocks](Tape& t, const Tensor& g) {
        t.accumulate(ix, coifnet::block_transpose(g, blocks));
    });
}

Var reshape(const Var& x, Shape shape) {
    Tape& tape = tape_of(x, "reshape");
    Tensor out = x.value().reshaped(std::move(shape));
    const std::size_t ix = x.id();
    return tape.record("reshape", std::move(out), {x}, [ix](Tape& t, const Tensor& g) {
        t.accumulate(ix, g.reshaped(t.value(ix).shape()));
    });
}

Var gather_rows(const Var& table, std::span<const std::size_t> indices) {
    Tape& tape = tape_of(table, "gather_rows");
    const Tensor& tv = table.value();
    const std::size_t cols = tv.cols();
    Tensor out = Tensor::matrix(indices.size(), cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= tv.rows()) {
            fail(ErrorKind::usage, "gather_rows: index " + std::to_string(indices[i]) + " outside table of " +
                                       std::to_string(tv.rows()) + " rows");
        }
        std::copy_n(tv.data().data() + indices[i] * cols, cols, out.data().data() + i * cols);
    }
    const std::size_t it = table.id();
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    return tape.record("gather_rows", std::move(out), {table}, [it, cols, idx = std::move(idx)](Tape& t, const Tensor& g) {
        Tensor& acc = t.grad_buffer(it);
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t c = 0; c < cols; ++c) acc(idx[i], c) += g[i * cols + c];
    });
}

Var tile_rows(const Var& x, std::size_t times) {
    Tape& tape = tape_of(x, "tile_rows");
    const Tensor& v = x.value();
    const std::size_t n = v.size();
    Tensor out = Tensor::matrix(v.rows() * times, v.cols());
    for (std::size_t k = 0; k < times; ++k) std::copy_n(v.data().data(), n, out.data().data() + k * n);
    const std::size_t ix = x.id();
    return tape.record("tile_rows", std::move(out), {x}, [ix, times, n](Tape& t, const Tensor& g) {
        Tensor& acc = t.grad_buffer(ix);
        for (std::size_t k = 0; k < times; ++k)
            for (std::size_t i = 0; i < n; ++i) acc[i] += g[k * n + i];
    });
}

Var repeat_rows(const Var& x, std::size_t times) {
    Tape& tape = tape_of(x, "repeat_rows");
    const Tensor& v = x.value();
    const std::size_t rows = v.rows();
    const std::size_t cols = v.cols();
    Tensor out = Tensor::matrix(rows * times, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < times; ++k)
            std::copy_n(v.data().data() + r * cols, cols, out.data().data() + (r * times + k) * cols);
    const std::size_t ix = x.id();
    return tape.record("repeat_rows", std::move(out), {x}, [ix, rows, cols, times](Tape& t, const Tensor& g) {
        Tensor& acc = t.grad_buffer(ix);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t k = 0; k < times; ++k)
                for (std::size_t c = 0; c < cols; ++c) acc(r, c) += g[(r * times + k) * cols + c];
    });
}

Var clamp_abs_min(const Var& x, double floor) {
    Tape& tape = tape_of(x, "clamp_abs_min");
    const Tensor& v = x.value();
    Tensor out(v.shape(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = std::abs(v[i]) >= floor ? v[i] : (v[i] < 0 ? -floor : floor);
    const std::size_t ix = x.id();
    return tape.record("clamp_abs_min", std::move(out), {x}, [ix, floor](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(ix);
        Tensor gx(g.shape(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] = std::abs(xv[i]) >= floor ? g[i] : 0.0;
        t.accumulate(ix, std::move(gx));
    });
}

}  // namespace coifnet::ad
