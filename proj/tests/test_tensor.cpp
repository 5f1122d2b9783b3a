#include <doctest.h>

#include <cmath>
#include <limits>

#include "coifnet/errors.hpp"
#include "coifnet/tensor.hpp"
#include "support.hpp"

using namespace coifnet;
using testing::random_tensor;

namespace {

// Plain triple loop.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    Tensor out = Tensor::matrix(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            out(i, j) = s;
        }
    return out;
}

}  // namespace

TEST_CASE("tensor construction checks element count") {
    CHECK(Tensor({2, 3}, 1.5).size() == 6);
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), Error);
    const Tensor t = Tensor::from_rows({{1, 2}, {3, 4}});
    CHECK(t.shape() == Shape{2, 2});
    CHECK(t(1, 0) == 3.0);
    CHECK_THROWS_AS(Tensor::from_rows({{1, 2}, {3}}), Error);
}

TEST_CASE("matmul small cases") {
    const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
    CHECK(matmul(a, Tensor::from_rows({{1, 0}, {0, 1}})) == a);
    CHECK(matmul(Tensor::from_rows({{1, 0}, {0, 1}}), Tensor::from_rows({{5}, {7}})) == Tensor::from_rows({{5}, {7}}));
    CHECK(matmul(a, Tensor::from_rows({{1}, {1}})) == Tensor::from_rows({{3}, {7}}));
}

TEST_CASE("matmul variants agree with a naive loop") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng.below(9), k = 1 + rng.below(9), n = 1 + rng.below(9);
        const Tensor a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
        const Tensor ref = naive_matmul(a, b);
        CHECK(max_abs_diff(matmul(a, b), ref) < 1e-12);
        CHECK(max_abs_diff(matmul_tn(transpose(a), b), ref) < 1e-12);
        CHECK(max_abs_diff(matmul_nt(a, transpose(b)), ref) < 1e-12);
    }
}

TEST_CASE("matmul rejects inner dimension mismatch with both shapes in the message") {
    try {
        matmul(Tensor::matrix(2, 3), Tensor::matrix(4, 2));
        FAIL("expected a dimension error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::dimension);
        const std::string msg = e.what();
        CHECK(msg.find("2x3") != std::string::npos);
        CHECK(msg.find("4x2") != std::string::npos);
    }
}

TEST_CASE("block_transpose transposes each stacked block") {
    Rng rng(4);
    const Tensor a = random_tensor({3 * 4, 5}, rng);
    const Tensor bt = block_transpose(a, 3);
    REQUIRE(bt.shape() == Shape{3 * 5, 4});
    for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 5; ++j) CHECK(bt(b * 5 + j, i) == a(b * 4 + i, j));
    CHECK(block_transpose(bt, 3) == a);
}

TEST_CASE("all_finite spots NaN and infinities") {
    Tensor t({2, 2}, 1.0);
    CHECK(t.all_finite());
    t[3] = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(t.all_finite());
    t[3] = -std::numeric_limits<double>::infinity();
    CHECK_FALSE(t.all_finite());
    t[3] = std::numeric_limits<double>::max();
    CHECK(t.all_finite());
}

TEST_CASE("rng streams are reproducible and below() stays in range") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
    CHECK(derive_seed(7, Stream::mask) != derive_seed(7, Stream::init));
    Rng r(5);
    for (int i = 0; i < 1000; ++i) {
        CHECK(r.below(7) < 7);
        const double u = r.uniform();
        CHECK((u >= 0.0 && u < 1.0));
    }
}

TEST_CASE("splitmix64 reference values") {
    // First outputs for seed 0, as published with the reference implementation.
    std::uint64_t s = 0;
    CHECK(splitmix64(s) == 0xe220a8397b1dcdafULL);
    CHECK(splitmix64(s) == 0x6e789e6aa1b965f4ULL);
    CHECK(splitmix64(s) == 0x06c45d188009454fULL);
}
