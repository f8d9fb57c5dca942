#pragma once

#include "errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hexst {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_product(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

/**
 * Dense row-major tensor of 64-bit floats.
 *
 * Library operations never modify their arguments; the mutable accessors exist
 * so callers can fill a freshly constructed value.
 */
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_product(shape_) != data_.size()) {
            throw StructuralError("tensor data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_string(shape_));
        }
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
        return Tensor({rows, cols}, fill);
    }

    static Tensor vector(std::vector<double> values) {
        const std::size_t n = values.size();
        return Tensor({n}, std::move(values));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::size_t rows() const {
        require_rank(2);
        return shape_[0];
    }
    std::size_t cols() const {
        require_rank(2);
        return shape_[1];
    }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    const double& operator[](std::size_t i) const noexcept { return data_[i]; }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * shape_[1] + j]; }
    const double& operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * shape_[1] + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * shape_[1], shape_[1]}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * shape_[1], shape_[1]}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

    void require_rank(std::size_t r) const {
        if (shape_.size() != r) {
            throw StructuralError("expected rank " + std::to_string(r) + " tensor, got shape " +
                                  shape_string(shape_));
        }
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Boolean occupancy flags. Dimensions of size 1 broadcast against the masked tensor.
class Mask {
public:
    Mask() = default;
    explicit Mask(Shape shape, bool fill = true) : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}
    Mask(Shape shape, std::vector<char> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_product(shape_) != data_.size()) {
            throw StructuralError("mask data length does not match shape " + shape_string(shape_));
        }
    }
    static Mask from_flags(std::initializer_list<bool> flags) {
        std::vector<char> d(flags.begin(), flags.end());
        const std::size_t n = d.size();
        return Mask({n}, std::move(d));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool operator[](std::size_t i) const noexcept { return data_[i] != 0; }
    void set(std::size_t i, bool v) noexcept { data_[i] = v ? 1 : 0; }

    friend bool operator==(const Mask&, const Mask&) = default;

private:
    Shape shape_;
    std::vector<char> data_;
};

// ---------------------------------------------------------------------------
// Matrix products

/// C = A B
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw StructuralError("matmul shape mismatch " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c = Tensor::matrix(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = &c(i, 0);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a(i, p);
            if (av == 0.0) continue;
            const double* brow = &b(p, 0);
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

/// C = A^T B
inline Tensor matmul_at_b(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) {
        throw StructuralError("matmul_at_b shape mismatch " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    Tensor c = Tensor::matrix(m, n);
    for (std::size_t p = 0; p < k; ++p) {
        const double* brow = &b(p, 0);
        for (std::size_t i = 0; i < m; ++i) {
            const double av = a(p, i);
            if (av == 0.0) continue;
            double* crow = &c(i, 0);
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

/// C = A B^T
inline Tensor matmul_a_bt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) {
        throw StructuralError("matmul_a_bt shape mismatch " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    Tensor c = Tensor::matrix(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = &a(i, 0);
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = &b(j, 0);
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            c(i, j) = s;
        }
    }
    return c;
}

// ---------------------------------------------------------------------------
// Elementwise and row/column helpers

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw StructuralError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                              shape_string(b.shape()));
    }
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (double& v : out.values()) v *= s;
    return out;
}

inline void add_inplace(Tensor& acc, const Tensor& b) {
    check_same_shape(acc, b, "add_inplace");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += b[i];
}

/// out(i, j) = a(i, j) + bias[j]
inline Tensor add_row_vector(const Tensor& a, const Tensor& bias) {
    if (bias.size() != a.cols()) throw StructuralError("add_row_vector: bias length mismatch");
    Tensor out = a;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bias[j];
    return out;
}

inline Tensor column_sums(const Tensor& a) {
    Tensor out({a.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out[j] += a(i, j);
    return out;
}

inline Tensor column_means(const Tensor& a) {
    Tensor out = column_sums(a);
    if (a.rows() > 0) out = scale(out, 1.0 / static_cast<double>(a.rows()));
    return out;
}

/// Subtract each column's mean.
inline Tensor center_columns(const Tensor& a) {
    const Tensor mu = column_means(a);
    Tensor out = a;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) -= mu[j];
    return out;
}

/// y = x W + b
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add_row_vector(matmul(x, w), b);
}

inline double max_abs(const Tensor& a) {
    double m = 0.0;
    for (double v : a.values()) m = std::max(m, std::abs(v));
    return m;
}

// ---------------------------------------------------------------------------
// Masked softmax

namespace detail {

// Strides of `valid` when viewed with the shape of `target`; size-1 mask dims broadcast.
inline std::vector<std::size_t> broadcast_strides(const Shape& mask_shape, const Shape& target) {
    if (mask_shape.size() != target.size()) {
        throw StructuralError("mask rank " + shape_string(mask_shape) + " does not match " + shape_string(target));
    }
    std::vector<std::size_t> strides(target.size(), 0);
    std::size_t stride = 1;
    for (std::size_t d = target.size(); d-- > 0;) {
        if (mask_shape[d] == target[d]) {
            strides[d] = stride;
        } else if (mask_shape[d] == 1) {
            strides[d] = 0;
        } else {
            throw StructuralError("mask shape " + shape_string(mask_shape) + " does not broadcast to " +
                                  shape_string(target));
        }
        stride *= mask_shape[d];
    }
    return strides;
}

} // namespace detail

/**
 * Softmax along `axis`, restricted to positions where `valid` is set.
 *
 * Invalid positions get exactly zero weight. A slice with no valid entry
 * returns all zeros instead of failing: empty window slots are routine.
 */
inline Tensor masked_softmax(const Tensor& scores, const Mask& valid, std::size_t axis) {
    const Shape& shape = scores.shape();
    if (axis >= shape.size()) throw StructuralError("masked_softmax: axis out of range");
    const auto mstrides = detail::broadcast_strides(valid.shape(), shape);

    std::vector<std::size_t> tstrides(shape.size(), 1);
    for (std::size_t d = shape.size(); d-- > 1;) tstrides[d - 1] = tstrides[d] * shape[d];

    const std::size_t len = shape[axis];
    const std::size_t outer = scores.size() / std::max<std::size_t>(len, 1);
    Tensor out(shape);
    if (len == 0) return out;

    std::vector<std::size_t> idx(shape.size(), 0);
    std::vector<double> ex(len);
    for (std::size_t s = 0; s < outer; ++s) {
        // Decode slice index into a multi-index with idx[axis] == 0.
        std::size_t rem = s;
        for (std::size_t d = shape.size(); d-- > 0;) {
            if (d == axis) {
                idx[d] = 0;
                continue;
            }
            idx[d] = rem % shape[d];
            rem /= shape[d];
        }
        std::size_t tbase = 0, mbase = 0;
        for (std::size_t d = 0; d < shape.size(); ++d) {
            tbase += idx[d] * tstrides[d];
            mbase += idx[d] * mstrides[d];
        }
        double mx = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (std::size_t k = 0; k < len; ++k) {
            if (valid[mbase + k * mstrides[axis]]) {
                mx = std::max(mx, scores[tbase + k * tstrides[axis]]);
                any = true;
            }
        }
        if (!any) continue;
        double total = 0.0;
        for (std::size_t k = 0; k < len; ++k) {
            if (valid[mbase + k * mstrides[axis]]) {
                ex[k] = std::exp(scores[tbase + k * tstrides[axis]] - mx);
                total += ex[k];
            } else {
                ex[k] = 0.0;
            }
        }
        for (std::size_t k = 0; k < len; ++k) out[tbase + k * tstrides[axis]] = ex[k] / total;
    }
    return out;
}

/// Gradient of a last-axis softmax of a matrix: dS = P * (dP - rowsum(dP * P)).
inline Tensor softmax_rows_backward(const Tensor& probs, const Tensor& d_probs) {
    check_same_shape(probs, d_probs, "softmax_rows_backward");
    Tensor ds(probs.shape());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < probs.cols(); ++j) dot += probs(i, j) * d_probs(i, j);
        for (std::size_t j = 0; j < probs.cols(); ++j) ds(i, j) = probs(i, j) * (d_probs(i, j) - dot);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Layer normalization over the last axis

struct LayerNormCache {
    Tensor normalized;            // (x - mean) * inv_std
    std::vector<double> inv_std;  // one per vector
};

inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                         LayerNormCache* cache = nullptr) {
    if (x.rank() == 0 || x.shape().back() == 0) throw StructuralError("layer_norm: zero-length last axis");
    const std::size_t d = x.shape().back();
    if (gain.size() != d || bias.size() != d) throw StructuralError("layer_norm: gain/bias length mismatch");
    const std::size_t n = x.size() / d;
    Tensor out(x.shape());
    Tensor normalized(x.shape());
    std::vector<double> inv_std(n);
    for (std::size_t v = 0; v < n; ++v) {
        const double* xv = &x[v * d];
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xv[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xv[j] - mean) * (xv[j] - mean);
        var /= static_cast<double>(d);
        const double denom = var + eps;
        const double is = denom > 0.0 ? 1.0 / std::sqrt(denom) : 0.0;
        inv_std[v] = is;
        for (std::size_t j = 0; j < d; ++j) {
            const double nv = (xv[j] - mean) * is;
            normalized[v * d + j] = nv;
            out[v * d + j] = nv * gain[j] + bias[j];
        }
    }
    if (cache) {
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

struct LayerNormGrads {
    Tensor d_x;
    Tensor d_gain;
    Tensor d_bias;
};

inline LayerNormGrads layer_norm_backward(const Tensor& d_out, const LayerNormCache& cache, const Tensor& gain) {
    const std::size_t d = gain.size();
    const std::size_t n = d_out.size() / d;
    LayerNormGrads g{Tensor(d_out.shape()), Tensor({d}), Tensor({d})};
    std::vector<double> dn(d);
    for (std::size_t v = 0; v < n; ++v) {
        double mean_dn = 0.0, mean_dn_n = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double dy = d_out[v * d + j];
            const double nv = cache.normalized[v * d + j];
            g.d_gain[j] += dy * nv;
            g.d_bias[j] += dy;
            dn[j] = dy * gain[j];
            mean_dn += dn[j];
            mean_dn_n += dn[j] * nv;
        }
        mean_dn /= static_cast<double>(d);
        mean_dn_n /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
            const double nv = cache.normalized[v * d + j];
            g.d_x[v * d + j] = cache.inv_std[v] * (dn[j] - mean_dn - nv * mean_dn_n);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// GELU (exact erf form)

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline double gelu_derivative(double x) {
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
    return cdf + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline Tensor gelu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.values()) v = gelu(v);
    return out;
}

// ---------------------------------------------------------------------------
// Gradient oracle

enum class FdStencil { central2, central4 };

/**
 * Central-difference gradient of a scalar function, one coordinate at a time.
 * central2: (f(x+h) - f(x-h)) / 2h
 * central4: (8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h
 */
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h,
                               FdStencil stencil = FdStencil::central2) {
    if (!(h > 0.0)) throw InputError("finite_diff_grad: step must be positive");
    Tensor grad(x.shape());
    Tensor probe = x;
    auto at = [&](std::size_t i, double orig, double delta) {
        probe[i] = orig + delta;
        const double v = f(probe);
        if (!std::isfinite(v)) {
            throw NumericError("finite_diff_grad: non-finite function value at coordinate " + std::to_string(i));
        }
        return v;
    };
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        const double d1 = at(i, orig, h) - at(i, orig, -h);
        if (stencil == FdStencil::central2) {
            grad[i] = d1 / (2.0 * h);
        } else {
            const double d2 = at(i, orig, 2.0 * h) - at(i, orig, -2.0 * h);
            grad[i] = (8.0 * d1 - d2) / (12.0 * h);
        }
        probe[i] = orig;
    }
    return grad;
}

/// Absolute floor below which gradient entries are compared absolutely.
inline constexpr double kGradRelFloor = 1e-6;

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
inline double max_relative_error(std::span<const double> a, std::span<const double> b,
                                 double floor = kGradRelFloor) {
    if (a.size() != b.size()) throw StructuralError("max_relative_error: length mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

} // namespace hexst
