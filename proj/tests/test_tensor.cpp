#include <doctest.h>

#include "streamgeo/errors.hpp"
#include "streamgeo/tensor.hpp"

#include <cmath>
#include <limits>
#include <random>

using namespace streamgeo;

namespace {

Tensor random_tensor(std::vector<std::int64_t> shape, std::uint64_t seed) {
    Tensor t(std::move(shape));
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> n(0.0F, 1.0F);
    for (auto& v : t.data()) {
        v = n(rng);
    }
    return t;
}

// Straight triple loop in double, used as the reference product.
std::vector<double> reference_matmul(const Tensor& a, const Tensor& b) {
    const auto m = a.dim(0);
    const auto k = a.dim(1);
    const auto n = b.dim(1);
    std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::int64_t p = 0; p < k; ++p) {
                acc += static_cast<double>(a.at(i, p)) * b.at(p, j);
            }
            out[static_cast<std::size_t>(i * n + j)] = acc;
        }
    }
    return out;
}

} // namespace

TEST_CASE("tensor shape invariants") {
    Tensor t({2, 3, 4});
    CHECK(t.size() == 24);
    CHECK(t.rows() == 6);
    CHECK(t.cols() == 4);
    CHECK_THROWS_AS(Tensor({2, 0}), ContractError);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>(3, 0.0F)), ContractError);
    CHECK(t.reshaped({6, 4}).shape() == std::vector<std::int64_t>{6, 4});
    CHECK_THROWS_AS(t.reshaped({5, 5}), ContractError);
}

TEST_CASE("matmul identity and hand-computed product") {
    const Tensor i2 = Tensor::identity(2);
    CHECK(matmul(i2, i2) == i2);

    const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
    const Tensor b = Tensor::from_rows({{0}, {1}});
    const Tensor c = matmul(a, b);
    REQUIRE(c.shape() == std::vector<std::int64_t>{2, 1});
    CHECK(c.at(0, 0) == 2.0F);
    CHECK(c.at(1, 0) == 4.0F);
}

TEST_CASE("matmul matches the double-precision triple loop") {
    const Tensor a = random_tensor({5, 7}, 1);
    const Tensor b = random_tensor({7, 3}, 2);
    const Tensor c = matmul(a, b);
    const auto ref = reference_matmul(a, b);
    for (std::size_t i = 0; i < ref.size(); ++i) {
        CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-5));
    }
}

TEST_CASE("matmul associativity and determinism") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Tensor a = random_tensor({3, 3}, seed * 3);
        const Tensor b = random_tensor({3, 3}, seed * 3 + 1);
        const Tensor c = random_tensor({3, 3}, seed * 3 + 2);
        const Tensor left = matmul(a, matmul(b, c));
        const Tensor right = matmul(matmul(a, b), c);
        for (std::size_t i = 0; i < left.size(); ++i) {
            CHECK(std::abs(left[i] - right[i]) <= 1e-5F * std::max(1.0F, std::abs(right[i])));
        }
        CHECK(matmul(a, b) == matmul(a, b));
    }
}

TEST_CASE("matmul rejects mismatched shapes and counts flops") {
    CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), ContractError);
    FlopCounter counter;
    matmul(Tensor({4, 5}), Tensor({5, 6}), &counter);
    CHECK(counter.flops == 2 * 4 * 5 * 6);
    matmul_transposed(Tensor({4, 5}), Tensor({6, 5}), &counter);
    CHECK(counter.flops == 2 * (2 * 4 * 5 * 6));
}

TEST_CASE("matmul_transposed agrees with matmul of the transpose") {
    const Tensor a = random_tensor({4, 6}, 5);
    const Tensor b = random_tensor({3, 6}, 6);
    CHECK(matmul_transposed(a, b) == matmul(a, transpose(b)));
}

TEST_CASE("softmax closed forms") {
    const Tensor uniform = softmax_rows(Tensor::filled({1, 4}, 2.5F));
    for (float v : uniform.data()) {
        CHECK(v == doctest::Approx(0.25));
    }
    const Tensor x = Tensor::from_rows({{0.0F, static_cast<float>(std::log(3.0))}});
    const Tensor p = softmax_rows(x);
    CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
    const Tensor x = random_tensor({6, 9}, 11);
    const Tensor p = softmax_rows(x);
    Tensor shifted = x;
    for (auto& v : shifted.data()) {
        v += 3.0F;
    }
    const Tensor q = softmax_rows(shifted);
    for (std::int64_t r = 0; r < p.rows(); ++r) {
        double sum = 0.0;
        for (float v : p.row(r)) {
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
    CHECK(max_abs_diff(p, q) < 1e-6F);
}

TEST_CASE("softmax masks -inf and rejects NaN") {
    const float inf = std::numeric_limits<float>::infinity();
    const Tensor p = softmax_rows(Tensor::from_rows({{-inf, 0.0F, 0.0F}}));
    CHECK(p[0] == 0.0F);
    CHECK(p[1] == doctest::Approx(0.5));
    CHECK_THROWS_AS(softmax_rows(Tensor::from_rows({{0.0F, std::nanf("")}})), ContractError);
    CHECK_THROWS_AS(softmax_rows(Tensor::from_rows({{-inf, -inf}})), ContractError);
}

TEST_CASE("layernorm cases") {
    const Tensor gain = Tensor::filled({2}, 1.0F);
    const Tensor bias = Tensor::zeros({2});
    const Tensor c = layernorm(Tensor::filled({1, 2}, 7.0F), gain, bias);
    CHECK(c[0] == 0.0F);
    CHECK(c[1] == 0.0F);

    // mean 0, variance 1: output x / sqrt(1 + eps)
    const Tensor y = layernorm(Tensor::from_rows({{1.0F, -1.0F}}), gain, bias);
    const double expected = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(y[0] == doctest::Approx(expected).epsilon(1e-6));
    CHECK(y[1] == doctest::Approx(-expected).epsilon(1e-6));

    const Tensor x = random_tensor({5, 16}, 3);
    const Tensor n = layernorm(x, Tensor::filled({16}, 1.0F), Tensor::zeros({16}));
    for (std::int64_t r = 0; r < n.rows(); ++r) {
        double mean = 0.0;
        for (float v : n.row(r)) {
            mean += v;
        }
        CHECK(std::abs(mean / 16.0) < 1e-6);
    }
    CHECK_THROWS(layernorm(Tensor({3, 1}), Tensor::filled({1}, 1.0F), Tensor::zeros({1})));
}

TEST_CASE("rmsnorm gives unit RMS rows") {
    const Tensor x = random_tensor({4, 16}, 9);
    const Tensor n = rmsnorm(x, Tensor::filled({16}, 1.0F));
    for (std::int64_t r = 0; r < n.rows(); ++r) {
        double ss = 0.0;
        for (float v : n.row(r)) {
            ss += static_cast<double>(v) * v;
        }
        CHECK(std::sqrt(ss / 16.0) == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("rotary position zero is identity and pairs keep their norm") {
    const Tensor x = random_tensor({2, 5, 8}, 4);
    CHECK(apply_rotary(x, 0) == x);
    const Tensor r = apply_rotary(x, 37);
    for (std::size_t i = 0; i < x.size(); i += 2) {
        const double before = std::hypot(x[i], x[i + 1]);
        const double after = std::hypot(r[i], r[i + 1]);
        CHECK(after == doctest::Approx(before).epsilon(1e-6));
    }
    CHECK_THROWS_AS(apply_rotary(Tensor({1, 2, 3}), 1), ConfigError);
    CHECK_THROWS_AS(apply_rotary(x, -1), ContractError);
}

TEST_CASE("rotary logits depend only on the index difference") {
    const Tensor q = random_tensor({1, 1, 16}, 21);
    const Tensor k = random_tensor({1, 1, 16}, 22);
    const auto logit = [&](std::int64_t t, std::int64_t s) {
        const Tensor a = apply_rotary(q, t);
        const Tensor b = apply_rotary(k, s);
        double dot = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            dot += static_cast<double>(a[i]) * b[i];
        }
        return dot;
    };
    for (std::int64_t delta : {1, 5, 100, 1000}) {
        CHECK(logit(7, 4) == doctest::Approx(logit(7 + delta, 4 + delta)).epsilon(1e-5));
        CHECK(logit(3, 3) == doctest::Approx(logit(3 + delta, 3 + delta)).epsilon(1e-5));
    }
}

TEST_CASE("rotary matches the closed-form pair rotation") {
    const Tensor x = random_tensor({1, 1, 4}, 31);
    const Tensor r = apply_rotary(x, 3, 10000.0);
    for (int i = 0; i < 2; ++i) {
        const double theta = 3.0 * std::pow(10000.0, -2.0 * i / 4.0);
        const double a = x[2 * i];
        const double b = x[2 * i + 1];
        CHECK(r[2 * i] == doctest::Approx(a * std::cos(theta) - b * std::sin(theta)).epsilon(1e-6));
        CHECK(r[2 * i + 1] == doctest::Approx(a * std::sin(theta) + b * std::cos(theta)).epsilon(1e-6));
    }
}

TEST_CASE("gelu reference points") {
    const Tensor y = gelu(Tensor::from_rows({{0.0F, 1.0F, -1.0F}}));
    CHECK(y[0] == 0.0F);
    CHECK(y[1] == doctest::Approx(0.841192).epsilon(1e-5));
    CHECK(y[2] == doctest::Approx(-0.158808).epsilon(1e-5));
}
