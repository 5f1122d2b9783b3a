#include "coifnet/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "coifnet/errors.hpp"

namespace coifnet {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) fail(ErrorKind::dimension, std::string(op) + ": expected rank-2 tensor, got " + shape_string(t.shape()));
}

ConstMap view(const Tensor& t) { return ConstMap(t.data().data(), t.rows(), t.cols()); }
MutMap view(Tensor& t) { return MutMap(t.data().data(), t.rows(), t.cols()); }

}  // namespace

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (element_count(shape_) != data_.size()) {
        fail(ErrorKind::dimension, "tensor shape " + shape_string(shape_) + " does not match " +
                                       std::to_string(data_.size()) + " values");
    }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) fail(ErrorKind::dimension, "from_rows: ragged rows");
        values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(values));
}

Tensor Tensor::row(std::initializer_list<double> values) { return row(std::vector<double>(values)); }

Tensor Tensor::row(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(Shape{1, n}, std::move(values));
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

bool Tensor::all_finite() const noexcept {
    // Exponent bits all set means Inf or NaN; the integer form vectorizes.
    constexpr std::uint64_t exponent = 0x7FF0000000000000ULL;
    std::uint64_t bad = 0;
    for (const double v : data_) bad |= static_cast<std::uint64_t>((std::bit_cast<std::uint64_t>(v) & exponent) == exponent);
    return bad == 0;
}

double Tensor::sum() const noexcept { return std::accumulate(data_.begin(), data_.end(), 0.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.cols() != b.rows()) {
        fail(ErrorKind::dimension,
             "matmul: inner dimensions differ for " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
    }
    Tensor out = Tensor::matrix(a.rows(), b.cols());
    view(out).noalias() = view(a) * view(b);
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul_tn");
    require_rank2(b, "matmul_tn");
    if (a.rows() != b.rows()) {
        fail(ErrorKind::dimension,
             "matmul_tn: row counts differ for " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
    }
    Tensor out = Tensor::matrix(a.cols(), b.cols());
    view(out).noalias() = view(a).transpose() * view(b);
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul_nt");
    require_rank2(b, "matmul_nt");
    if (a.cols() != b.cols()) {
        fail(ErrorKind::dimension,
             "matmul_nt: column counts differ for " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
    }
    Tensor out = Tensor::matrix(a.rows(), b.rows());
    view(out).noalias() = view(a) * view(b).transpose();
    return out;
}

Tensor transpose(const Tensor& a) { return block_transpose(a, 1); }

Tensor block_transpose(const Tensor& a, std::size_t blocks) {
    require_rank2(a, "block_transpose");
    if (blocks == 0 || a.rows() % blocks != 0) {
        fail(ErrorKind::dimension,
             "block_transpose: " + shape_string(a.shape()) + " not divisible into " + std::to_string(blocks) + " blocks");
    }
    const std::size_t r = a.rows() / blocks;
    const std::size_t c = a.cols();
    Tensor out = Tensor::matrix(blocks * c, r);
    for (std::size_t b = 0; b < blocks; ++b) {
        const double* src = a.data().data() + b * r * c;
        double* dst = out.data().data() + b * r * c;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
    }
    return out;
}

void add_inplace(Tensor& acc, const Tensor& x) {
    if (acc.shape() != x.shape()) {
        fail(ErrorKind::dimension, "add_inplace: " + shape_string(acc.shape()) + " vs " + shape_string(x.shape()));
    }
    auto dst = acc.data();
    auto src = x.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void axpy_inplace(Tensor& acc, double alpha, const Tensor& x) {
    if (acc.shape() != x.shape()) {
        fail(ErrorKind::dimension, "axpy_inplace: " + shape_string(acc.shape()) + " vs " + shape_string(x.shape()));
    }
    auto dst = acc.data();
    auto src = x.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * src[i];
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) fail(ErrorKind::dimension, "max_abs_diff: size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace coifnet
