#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace coifnet {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

// Dense row-major tensor of doubles. Rank 2 is the working rank of every kernel;
// rank 3 is used for batch containers (B x L x D).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
        return Tensor(Shape{rows, cols}, fill);
    }
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    // 1 x n row vector.
    static Tensor row(std::initializer_list<double> values);
    static Tensor row(std::vector<double> values);
    static Tensor scalar(double v) { return Tensor(Shape{1, 1}, v); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    // For rank-2 tensors.
    std::size_t rows() const { return shape_.at(0); }
    std::size_t cols() const { return shape_.at(1); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * shape_[1] + c]; }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) noexcept {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    // Same data, new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    bool all_finite() const noexcept;
    double sum() const noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

// ----------------------------------------------------------------------------
// Value kernels (no gradient tracking). Rank-2 inputs unless noted.

Tensor matmul(const Tensor& a, const Tensor& b);     // a * b
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T * b
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor transpose(const Tensor& a);

// Treats `a` as `blocks` stacked (r x c) matrices and transposes each:
// (blocks*r) x c  ->  (blocks*c) x r.
Tensor block_transpose(const Tensor& a, std::size_t blocks);

void add_inplace(Tensor& acc, const Tensor& x);
void axpy_inplace(Tensor& acc, double alpha, const Tensor& x);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace coifnet
