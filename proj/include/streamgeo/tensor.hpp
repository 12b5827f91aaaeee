#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace streamgeo {

// Analytic operation counter. Kernels that accept one add 2*M*K*N per matmul
// (and the equivalent multiply-add count for attention-style contractions).
struct FlopCounter {
    std::uint64_t flops = 0;
    void add(std::uint64_t n) { flops += n; }
};

// Dense row-major float32 array. Every extent is >= 1 and the flat buffer
// always holds exactly product(shape) elements.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> shape);
    Tensor(std::vector<std::int64_t> shape, std::vector<float> data);

    static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor filled(std::vector<std::int64_t> shape, float value);
    static Tensor from_rows(std::initializer_list<std::initializer_list<float>> rows);
    static Tensor identity(std::int64_t n);

    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::int64_t dim(std::size_t axis) const;
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    float* raw() { return data_.data(); }
    const float* raw() const { return data_.data(); }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    // 2-D element access.
    float& at(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }
    float at(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }

    // Rows of the last axis, i.e. product of all leading extents.
    std::int64_t rows() const;
    std::int64_t cols() const { return shape_.back(); }

    Tensor reshaped(std::vector<std::int64_t> shape) const;
    std::span<const float> row(std::int64_t r) const;
    std::span<float> row(std::int64_t r);

    bool operator==(const Tensor& other) const = default;

    std::string shape_string() const;

private:
    std::vector<std::int64_t> shape_;
    std::vector<float> data_;
};

// C = A * B for A [M x K], B [K x N]. Each output element is summed over K
// strictly left to right, so results are independent of how rows are batched.
Tensor matmul(const Tensor& a, const Tensor& b, FlopCounter* counter = nullptr);

// C = A * B^T for A [M x K], B [N x K]; same summation-order guarantee.
Tensor matmul_transposed(const Tensor& a, const Tensor& b, FlopCounter* counter = nullptr);

Tensor transpose(const Tensor& a);

// Numerically stable softmax over the last axis. Entries equal to -inf get
// probability zero; a NaN anywhere is a contract violation.
Tensor softmax_rows(const Tensor& x);
void softmax_rows_inplace(Tensor& x);

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5F);
Tensor rmsnorm(const Tensor& x, const Tensor& gain, float eps = 1e-6F);

Tensor add(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& a, const Tensor& b);
// x[r, :] += v for every row r.
void add_row_broadcast(Tensor& x, const Tensor& v);
// x[r, :] *= v for every row r.
Tensor scale_rows(const Tensor& x, const Tensor& v);
Tensor scaled(const Tensor& x, float s);
Tensor gelu(const Tensor& x);

// Rotates feature pairs (x[2i], x[2i+1]) of every row by
// position * base^(-2i/d_h). x has shape [heads, tokens, d_h].
Tensor apply_rotary(const Tensor& x, std::int64_t position, double base = 10000.0);

float max_abs_diff(const Tensor& a, const Tensor& b);

} // namespace streamgeo
