#include "streamgeo/tensor.hpp"

#include "streamgeo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

namespace streamgeo {

namespace {

std::size_t checked_count(const std::vector<std::int64_t>& shape) {
    if (shape.empty()) {
        throw ContractError("tensor shape must have at least one axis");
    }
    std::size_t n = 1;
    for (auto e : shape) {
        if (e < 1) {
            throw ContractError("tensor extents must be >= 1");
        }
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

void require_rank2(const Tensor& t, const char* what) {
    if (t.rank() != 2) {
        throw ContractError(std::string(what) + ": expected a 2-D tensor, got " + t.shape_string());
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ContractError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                            b.shape_string());
    }
}

void require_vector_len(const Tensor& v, std::int64_t n, const char* what) {
    if (v.size() != static_cast<std::size_t>(n)) {
        throw ContractError(std::string(what) + ": parameter length " + std::to_string(v.size()) +
                            " does not match feature width " + std::to_string(n));
    }
}

} // namespace

Tensor::Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(checked_count(shape_), 0.0F);
}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_count(shape_) != data_.size()) {
        throw ContractError("tensor data length " + std::to_string(data_.size()) +
                            " does not match shape " + shape_string());
    }
}

Tensor Tensor::filled(std::vector<std::int64_t> shape, float value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
    const auto m = static_cast<std::int64_t>(rows.size());
    if (m == 0) {
        throw ContractError("from_rows: no rows");
    }
    const auto n = static_cast<std::int64_t>(rows.begin()->size());
    std::vector<float> data;
    data.reserve(static_cast<std::size_t>(m * n));
    for (const auto& r : rows) {
        if (static_cast<std::int64_t>(r.size()) != n) {
            throw ContractError("from_rows: ragged rows");
        }
        data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({m, n}, std::move(data));
}

Tensor Tensor::identity(std::int64_t n) {
    Tensor t({n, n});
    for (std::int64_t i = 0; i < n; ++i) {
        t.at(i, i) = 1.0F;
    }
    return t;
}

std::int64_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ContractError("axis " + std::to_string(axis) + " out of range for " + shape_string());
    }
    return shape_[axis];
}

std::int64_t Tensor::rows() const {
    return static_cast<std::int64_t>(data_.size()) / shape_.back();
}

Tensor Tensor::reshaped(std::vector<std::int64_t> shape) const {
    return Tensor(std::move(shape), data_);
}

std::span<const float> Tensor::row(std::int64_t r) const {
    const auto n = static_cast<std::size_t>(shape_.back());
    return std::span<const float>(data_).subspan(static_cast<std::size_t>(r) * n, n);
}

std::span<float> Tensor::row(std::int64_t r) {
    const auto n = static_cast<std::size_t>(shape_.back());
    return std::span<float>(data_).subspan(static_cast<std::size_t>(r) * n, n);
}

std::string Tensor::shape_string() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        os << (i ? "x" : "") << shape_[i];
    }
    os << ']';
    return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b, FlopCounter* counter) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const auto m = a.dim(0);
    const auto k = a.dim(1);
    const auto n = b.dim(1);
    if (b.dim(0) != k) {
        throw ContractError("matmul: inner extents differ " + a.shape_string() + " x " + b.shape_string());
    }
    Tensor c({m, n});
    const float* pa = a.raw();
    const float* pb = b.raw();
    float* pc = c.raw();
    // i-k-j order: each c[i][j] still accumulates over k in ascending order.
    for (std::int64_t i = 0; i < m; ++i) {
        float* crow = pc + i * n;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const float aik = pa[i * k + kk];
            const float* brow = pb + kk * n;
            for (std::int64_t j = 0; j < n; ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
    if (counter) {
        counter->add(2ULL * static_cast<std::uint64_t>(m * k * n));
    }
    return c;
}

Tensor matmul_transposed(const Tensor& a, const Tensor& b, FlopCounter* counter) {
    require_rank2(a, "matmul_transposed");
    require_rank2(b, "matmul_transposed");
    const auto m = a.dim(0);
    const auto k = a.dim(1);
    const auto n = b.dim(0);
    if (b.dim(1) != k) {
        throw ContractError("matmul_transposed: inner extents differ " + a.shape_string() + " x " +
                            b.shape_string() + "^T");
    }
    Tensor c({m, n});
    for (std::int64_t i = 0; i < m; ++i) {
        const float* arow = a.raw() + i * k;
        for (std::int64_t j = 0; j < n; ++j) {
            const float* brow = b.raw() + j * k;
            float acc = 0.0F;
            for (std::int64_t kk = 0; kk < k; ++kk) {
                acc += arow[kk] * brow[kk];
            }
            c.at(i, j) = acc;
        }
    }
    if (counter) {
        counter->add(2ULL * static_cast<std::uint64_t>(m * k * n));
    }
    return c;
}

Tensor transpose(const Tensor& a) {
    require_rank2(a, "transpose");
    Tensor t({a.dim(1), a.dim(0)});
    for (std::int64_t i = 0; i < a.dim(0); ++i) {
        for (std::int64_t j = 0; j < a.dim(1); ++j) {
            t.at(j, i) = a.at(i, j);
        }
    }
    return t;
}

void softmax_rows_inplace(Tensor& x) {
    const auto n = x.cols();
    for (std::int64_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        float mx = -std::numeric_limits<float>::infinity();
        for (float v : row) {
            if (std::isnan(v)) {
                throw ContractError("softmax_rows: NaN input");
            }
            mx = std::max(mx, v);
        }
        if (mx == -std::numeric_limits<float>::infinity()) {
            throw ContractError("softmax_rows: row has no finite entry");
        }
        float sum = 0.0F;
        for (std::int64_t j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        const float inv = 1.0F / sum;
        for (std::int64_t j = 0; j < n; ++j) {
            row[j] *= inv;
        }
    }
}

Tensor softmax_rows(const Tensor& x) {
    Tensor y = x;
    softmax_rows_inplace(y);
    return y;
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
    const auto d = x.cols();
    if (d < 2) {
        throw ContractError("layernorm: feature width must be >= 2");
    }
    require_vector_len(gain, d, "layernorm");
    require_vector_len(bias, d, "layernorm");
    Tensor y(x.shape());
    for (std::int64_t r = 0; r < x.rows(); ++r) {
        const auto in = x.row(r);
        auto out = y.row(r);
        double mean = 0.0;
        for (float v : in) {
            mean += v;
        }
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (float v : in) {
            const double c = v - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::int64_t j = 0; j < d; ++j) {
            out[j] = static_cast<float>((in[j] - mean) * inv) * gain[j] + bias[j];
        }
    }
    return y;
}

Tensor rmsnorm(const Tensor& x, const Tensor& gain, float eps) {
    const auto d = x.cols();
    require_vector_len(gain, d, "rmsnorm");
    Tensor y(x.shape());
    for (std::int64_t r = 0; r < x.rows(); ++r) {
        const auto in = x.row(r);
        auto out = y.row(r);
        double ms = 0.0;
        for (float v : in) {
            ms += static_cast<double>(v) * v;
        }
        ms /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(ms + eps);
        for (std::int64_t j = 0; j < d; ++j) {
            out[j] = static_cast<float>(in[j] * inv) * gain[j];
        }
    }
    return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor c = a;
    add_inplace(c, b);
    return c;
}

void add_inplace(Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] += b[i];
    }
}

void add_row_broadcast(Tensor& x, const Tensor& v) {
    require_vector_len(v, x.cols(), "add_row_broadcast");
    for (std::int64_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        for (std::int64_t j = 0; j < x.cols(); ++j) {
            row[j] += v[j];
        }
    }
}

Tensor scale_rows(const Tensor& x, const Tensor& v) {
    require_vector_len(v, x.cols(), "scale_rows");
    Tensor y = x;
    for (std::int64_t r = 0; r < y.rows(); ++r) {
        auto row = y.row(r);
        for (std::int64_t j = 0; j < y.cols(); ++j) {
            row[j] *= v[j];
        }
    }
    return y;
}

Tensor scaled(const Tensor& x, float s) {
    Tensor y = x;
    for (auto& v : y.data()) {
        v *= s;
    }
    return y;
}

Tensor gelu(const Tensor& x) {
    Tensor y = x;
    constexpr float k = 0.7978845608F; // sqrt(2/pi)
    for (auto& v : y.data()) {
        v = 0.5F * v * (1.0F + std::tanh(k * (v + 0.044715F * v * v * v)));
    }
    return y;
}

Tensor apply_rotary(const Tensor& x, std::int64_t position, double base) {
    if (x.rank() != 3) {
        throw ContractError("apply_rotary: expected [heads, tokens, d_h], got " + x.shape_string());
    }
    const auto dh = x.dim(2);
    if (dh % 2 != 0) {
        throw ConfigError("apply_rotary: head dimension must be even, got " + std::to_string(dh));
    }
    if (position < 0) {
        throw ContractError("apply_rotary: negative position index");
    }
    Tensor y = x;
    if (position == 0) {
        return y;
    }
    const auto half = dh / 2;
    std::vector<float> cs(static_cast<std::size_t>(half));
    std::vector<float> sn(static_cast<std::size_t>(half));
    for (std::int64_t i = 0; i < half; ++i) {
        // Angle in double: stream indices grow without bound.
        const double freq = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(dh));
        const double angle = static_cast<double>(position) * freq;
        cs[static_cast<std::size_t>(i)] = static_cast<float>(std::cos(angle));
        sn[static_cast<std::size_t>(i)] = static_cast<float>(std::sin(angle));
    }
    for (std::int64_t r = 0; r < y.rows(); ++r) {
        auto row = y.row(r);
        for (std::int64_t i = 0; i < half; ++i) {
            const float a = row[2 * i];
            const float b = row[2 * i + 1];
            const float c = cs[static_cast<std::size_t>(i)];
            const float s = sn[static_cast<std::size_t>(i)];
            row[2 * i] = a * c - b * s;
            row[2 * i + 1] = a * s + b * c;
        }
    }
    return y;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    float m = 0.0F;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

} // namespace streamgeo
