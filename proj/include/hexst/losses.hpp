#pragma once

#include "errors.hpp"
#include "numerics.hpp"

#include <cmath>
#include <string>

namespace hexst {

struct LossWeights {
    double mse = 0.001;
    double pearson = 1.0;
    double tfa = 0.1;
    double dev = 0.1;
};

/// Per-term switches for ablations. A disabled term is reported but neither
/// weighted into the total nor differentiated.
struct LossToggles {
    bool mse = true;
    bool pearson = true;
    bool tfa = true;
    bool dev = true;
};

struct LossReport {
    double mse = 0.0;
    double pearson = 0.0;
    double tfa = 0.0;
    double dev = 0.0;
    double total = 0.0;
};

/// Scalar loss value with its gradient w.r.t. the first tensor argument.
struct LossValue {
    double value = 0.0;
    Tensor grad;
};

inline LossValue loss_mse(const Tensor& y_hat, const Tensor& y) {
    check_same_shape(y_hat, y, "loss_mse");
    const double n = static_cast<double>(y.size());
    LossValue out{0.0, Tensor(y.shape())};
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double e = y_hat[i] - y[i];
        out.value += e * e;
        out.grad[i] = 2.0 * e / n;
    }
    out.value /= n;
    return out;
}

namespace detail {

struct ColumnPcc {
    double pcc = 0.0;
    bool degenerate = false;
};

// Pearson correlation of column g of a and b (population moments).
inline ColumnPcc column_pcc(const Tensor& a, const Tensor& b, std::size_t g, std::vector<double>* da = nullptr) {
    const std::size_t n = a.rows();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a(i, g);
        mb += b(i, g);
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double xa = a(i, g) - ma, xb = b(i, g) - mb;
        sab += xa * xb;
        saa += xa * xa;
        sbb += xb * xb;
    }
    if (saa <= 0.0 || sbb <= 0.0) {
        if (da) da->assign(n, 0.0);
        return {0.0, true};
    }
    const double na = std::sqrt(saa), nb = std::sqrt(sbb);
    const double pcc = sab / (na * nb);
    if (da) {
        da->resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double xa = a(i, g) - ma, xb = b(i, g) - mb;
            (*da)[i] = xb / (na * nb) - pcc * xa / saa;
        }
    }
    return {pcc, false};
}

} // namespace detail

/// 1 - mean over genes of the across-spot correlation. Constant columns count as PCC 0.
inline LossValue loss_pearson(const Tensor& y_hat, const Tensor& y) {
    check_same_shape(y_hat, y, "loss_pearson");
    if (y.rows() < 2) throw InputError("loss_pearson: need at least two spots");
    const std::size_t n = y.rows(), g = y.cols();
    LossValue out{0.0, Tensor(y.shape())};
    std::vector<double> d;
    double sum = 0.0;
    for (std::size_t j = 0; j < g; ++j) {
        sum += detail::column_pcc(y_hat, y, j, &d).pcc;
        for (std::size_t i = 0; i < n; ++i) out.grad(i, j) = -d[i] / static_cast<double>(g);
    }
    out.value = 1.0 - sum / static_cast<double>(g);
    return out;
}

struct LinearProjection {
    Tensor weight;  // D_out x D_t
    Tensor bias;    // D_t
};

struct TfaLoss {
    double value = 0.0;
    Tensor d_z;
    Tensor d_weight;
    Tensor d_bias;
};

/// Mean cosine distance between p(z_i) = z_i W + b and t_i. A zero vector has cosine 0.
inline TfaLoss loss_tfa(const Tensor& z, const Tensor& t, const LinearProjection& proj) {
    const Tensor p = linear(z, proj.weight, proj.bias);
    check_same_shape(p, t, "loss_tfa");
    const std::size_t n = p.rows(), d = p.cols();
    Tensor dp(p.shape());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double pp = 0.0, tt = 0.0, pt = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            pp += p(i, j) * p(i, j);
            tt += t(i, j) * t(i, j);
            pt += p(i, j) * t(i, j);
        }
        if (pp <= 0.0 || tt <= 0.0) {
            total += 1.0;
            continue;
        }
        const double np = std::sqrt(pp), nt = std::sqrt(tt);
        const double cosv = pt / (np * nt);
        total += 1.0 - cosv;
        for (std::size_t j = 0; j < d; ++j) {
            dp(i, j) = -(t(i, j) / (np * nt) - cosv * p(i, j) / pp) / static_cast<double>(n);
        }
    }
    TfaLoss out;
    out.value = total / static_cast<double>(n);
    out.d_z = matmul_a_bt(dp, proj.weight);
    out.d_weight = matmul_at_b(z, dp);
    out.d_bias = column_sums(dp);
    return out;
}

/// Population standard deviation of each column.
inline std::vector<double> column_stddev(const Tensor& a) {
    const Tensor mu = column_means(a);
    std::vector<double> sd(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) sd[j] += (a(i, j) - mu[j]) * (a(i, j) - mu[j]);
    for (double& v : sd) v = std::sqrt(v / static_cast<double>(a.rows()));
    return sd;
}

/// Ground-truth deviations y - mean(y), standardised per gene by (sigma + eps).
inline Tensor standardized_deviations(const Tensor& y, double eps) {
    Tensor dev = center_columns(y);
    const auto sd = column_stddev(dev);
    for (std::size_t i = 0; i < dev.rows(); ++i)
        for (std::size_t j = 0; j < dev.cols(); ++j) dev(i, j) /= sd[j] + eps;
    return dev;
}

/**
 * Deviation matching: both the ground-truth deviations and the predicted
 * deviations are divided by their own per-gene standard deviation (+ eps),
 * then compared with a mean squared error.
 */
inline LossValue loss_dev(const Tensor& y_dev_hat, const Tensor& y, double eps = 1e-8) {
    check_same_shape(y_dev_hat, y, "loss_dev");
    if (y.rows() < 2) throw InputError("loss_dev: need at least two spots");
    const std::size_t n = y.rows(), g = y.cols();
    const double ng = static_cast<double>(n * g);
    const Tensor target = standardized_deviations(y, eps);
    const Tensor mu = column_means(y_dev_hat);
    const auto sd = column_stddev(y_dev_hat);

    LossValue out{0.0, Tensor(y.shape())};
    std::vector<double> gt(n);
    for (std::size_t j = 0; j < g; ++j) {
        const double denom = sd[j] + eps;
        double proj = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = y_dev_hat(i, j) / denom - target(i, j);
            out.value += e * e;
            gt[i] = 2.0 * e / ng;
            proj += gt[i] * y_dev_hat(i, j);
        }
        // d sd / d p_i = (p_i - mean) / (n sd)
        const double coef = sd[j] > 0.0 ? proj / (denom * denom * static_cast<double>(n) * sd[j]) : 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            out.grad(i, j) = gt[i] / denom - coef * (y_dev_hat(i, j) - mu[j]);
        }
    }
    out.value /= ng;
    return out;
}

inline LossWeights effective_weights(const LossWeights& w, const LossToggles& on) {
    return {on.mse ? w.mse : 0.0, on.pearson ? w.pearson : 0.0, on.tfa ? w.tfa : 0.0, on.dev ? w.dev : 0.0};
}

inline LossReport loss_total(double mse, double pearson, double tfa, double dev, const LossWeights& w) {
    return {mse, pearson, tfa, dev, w.mse * mse + w.pearson * pearson + w.tfa * tfa + w.dev * dev};
}

} // namespace hexst
