#pragma once

#include "errors.hpp"
#include "losses.hpp"
#include "numerics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace hexst {

inline double pcc_genewise(const Tensor& y_hat, const Tensor& y) {
    check_same_shape(y_hat, y, "pcc_genewise");
    if (y.rows() < 2) throw InputError("pcc_genewise: need at least two spots");
    double sum = 0.0;
    for (std::size_t g = 0; g < y.cols(); ++g) sum += detail::column_pcc(y_hat, y, g).pcc;
    return std::clamp(sum / static_cast<double>(y.cols()), -1.0, 1.0);
}

inline double pcc_spotwise(const Tensor& y_hat, const Tensor& y) {
    check_same_shape(y_hat, y, "pcc_spotwise");
    if (y.cols() < 2) throw InputError("pcc_spotwise: need at least two genes");
    const std::size_t n = y.rows(), g = y.cols();
    Tensor a = Tensor::matrix(g, n), b = Tensor::matrix(g, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < g; ++j) {
            a(j, i) = y_hat(i, j);
            b(j, i) = y(i, j);
        }
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += detail::column_pcc(a, b, i).pcc;
    return std::clamp(sum / static_cast<double>(n), -1.0, 1.0);
}

/// Quantile bin per value: floor(rank * bins / n), equal values share the lowest rank's bin.
inline std::vector<int> quantile_bins(std::span<const double> values, int bins) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<int> out(n, 0);
    std::size_t start = 0;
    while (start < n) {
        std::size_t end = start + 1;
        while (end < n && values[order[end]] == values[order[start]]) ++end;
        const int bin = static_cast<int>(start * static_cast<std::size_t>(bins) / n);
        for (std::size_t k = start; k < end; ++k) out[order[k]] = bin;
        start = end;
    }
    return out;
}

/// Discrete mutual information (nats) of two binnings.
inline double mutual_information(std::span<const int> a, std::span<const int> b, int bins) {
    const std::size_t n = a.size();
    const auto nb = static_cast<std::size_t>(bins);
    std::vector<double> joint(nb * nb, 0.0), pa(nb, 0.0), pb(nb, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        joint[static_cast<std::size_t>(a[i]) * nb + static_cast<std::size_t>(b[i])] += 1.0;
        pa[static_cast<std::size_t>(a[i])] += 1.0;
        pb[static_cast<std::size_t>(b[i])] += 1.0;
    }
    const double inv = 1.0 / static_cast<double>(n);
    double mi = 0.0;
    for (std::size_t x = 0; x < nb; ++x) {
        for (std::size_t y = 0; y < nb; ++y) {
            const double pxy = joint[x * nb + y] * inv;
            if (pxy > 0.0) mi += pxy * std::log(pxy / (pa[x] * inv * pb[y] * inv));
        }
    }
    return std::max(mi, 0.0);
}

inline double mi_gene(const Tensor& y_hat, const Tensor& y, std::size_t g, int bins) {
    std::vector<double> a(y.rows()), b(y.rows());
    for (std::size_t i = 0; i < y.rows(); ++i) {
        a[i] = y_hat(i, g);
        b[i] = y(i, g);
    }
    const auto ba = quantile_bins(a, bins);
    const auto bb = quantile_bins(b, bins);
    return mutual_information(ba, bb, bins);
}

inline double mi_genewise(const Tensor& y_hat, const Tensor& y, int bins = 16) {
    check_same_shape(y_hat, y, "mi_genewise");
    if (bins < 1) throw InputError("mi_genewise: bins must be positive");
    if (y.rows() < static_cast<std::size_t>(bins)) throw InputError("mi_genewise: fewer spots than bins");
    double sum = 0.0;
    for (std::size_t g = 0; g < y.cols(); ++g) sum += mi_gene(y_hat, y, g, bins);
    return sum / static_cast<double>(y.cols());
}

struct AucResult {
    double auc = 0.5;
    bool degenerate = false;  // one of the classes was empty
};

/// Mann-Whitney AUC with midranks for tied scores.
inline AucResult mann_whitney_auc(std::span<const double> scores, std::span<const char> positive) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    std::size_t n_pos = 0;
    std::size_t start = 0;
    while (start < n) {
        std::size_t end = start + 1;
        while (end < n && scores[order[end]] == scores[order[start]]) ++end;
        // ranks start+1 .. end, doubled to stay integral
        const double midrank2 = static_cast<double>(start + 1 + end);
        for (std::size_t k = start; k < end; ++k) {
            if (positive[order[k]]) {
                rank_sum += midrank2;
                ++n_pos;
            }
        }
        start = end;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return {0.5, true};
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    const double u2 = rank_sum - np * (np + 1.0);
    return {u2 / (2.0 * np * nn), false};
}

enum class AucPooling { pooled, per_gene };

namespace detail {

template <typename Label>
AucResult auc_with_labels(const Tensor& y_hat, const Tensor& y, AucPooling pooling, Label label) {
    check_same_shape(y_hat, y, "auc");
    if (pooling == AucPooling::pooled) {
        std::vector<char> pos(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) pos[i] = label(y[i]) ? 1 : 0;
        return mann_whitney_auc(y_hat.values(), pos);
    }
    double sum = 0.0;
    std::size_t used = 0;
    std::vector<double> s(y.rows());
    std::vector<char> pos(y.rows());
    for (std::size_t g = 0; g < y.cols(); ++g) {
        for (std::size_t i = 0; i < y.rows(); ++i) {
            s[i] = y_hat(i, g);
            pos[i] = label(y(i, g)) ? 1 : 0;
        }
        const auto r = mann_whitney_auc(s, pos);
        if (r.degenerate) continue;
        sum += r.auc;
        ++used;
    }
    if (used == 0) return {0.5, true};
    return {sum / static_cast<double>(used), false};
}

} // namespace detail

/// Predictions as scores for the label y > 0.
inline AucResult auc_0_vs_nonzero(const Tensor& y_hat, const Tensor& y, AucPooling pooling = AucPooling::pooled) {
    return detail::auc_with_labels(y_hat, y, pooling, [](double v) { return v > 0.0; });
}

/// Global median of all entries (lower middle for even counts).
inline double global_median(const Tensor& y) {
    std::vector<double> v(y.values().begin(), y.values().end());
    if (v.empty()) throw InputError("global_median: empty tensor");
    const std::size_t mid = (v.size() - 1) / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    return v[mid];
}

/// Predictions as scores for the label y > median(Y); ties at the median are negatives.
inline AucResult auc_q50(const Tensor& y_hat, const Tensor& y, AucPooling pooling = AucPooling::pooled) {
    const double med = global_median(y);
    return detail::auc_with_labels(y_hat, y, pooling, [med](double v) { return v > med; });
}

struct GeneMetrics {
    std::string gene;
    double pcc = 0.0;
    double mi = 0.0;
    double auc_0vnz = 0.5;
    double auc_q50 = 0.5;
};

struct EvalReport {
    double pcc_f = 0.0;
    double pcc_s = 0.0;
    double mi_f = 0.0;
    double auc_0vnz = 0.5;
    double auc_q50 = 0.5;
    bool auc_0vnz_degenerate = false;
    bool auc_q50_degenerate = false;
    std::vector<GeneMetrics> genes;
};

struct EvalOptions {
    int mi_bins = 16;
    AucPooling pooling = AucPooling::pooled;
};

inline EvalReport evaluate(const Tensor& y_hat, const Tensor& y, std::span<const std::string> gene_names,
                           const EvalOptions& opt = {}) {
    check_same_shape(y_hat, y, "evaluate");
    EvalReport r;
    r.pcc_f = pcc_genewise(y_hat, y);
    r.pcc_s = y.cols() >= 2 ? pcc_spotwise(y_hat, y) : 0.0;
    const int bins = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(opt.mi_bins), y.rows()));
    r.mi_f = mi_genewise(y_hat, y, bins);
    const auto a0 = auc_0_vs_nonzero(y_hat, y, opt.pooling);
    const auto aq = auc_q50(y_hat, y, opt.pooling);
    r.auc_0vnz = a0.auc;
    r.auc_0vnz_degenerate = a0.degenerate;
    r.auc_q50 = aq.auc;
    r.auc_q50_degenerate = aq.degenerate;

    const double med = global_median(y);
    std::vector<double> s(y.rows());
    std::vector<char> pos0(y.rows()), posq(y.rows());
    for (std::size_t g = 0; g < y.cols(); ++g) {
        GeneMetrics gm;
        gm.gene = g < gene_names.size() ? gene_names[g] : "gene_" + std::to_string(g);
        gm.pcc = detail::column_pcc(y_hat, y, g).pcc;
        gm.mi = mi_gene(y_hat, y, g, bins);
        for (std::size_t i = 0; i < y.rows(); ++i) {
            s[i] = y_hat(i, g);
            pos0[i] = y(i, g) > 0.0;
            posq[i] = y(i, g) > med;
        }
        gm.auc_0vnz = mann_whitney_auc(s, pos0).auc;
        gm.auc_q50 = mann_whitney_auc(s, posq).auc;
        r.genes.push_back(std::move(gm));
    }
    return r;
}

/// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// Summary block of key=value lines, a blank line, then a comma-separated per-gene table.
inline std::string format_eval_report(const EvalReport& r) {
    std::ostringstream os;
    os << "pcc_f=" << format_double(r.pcc_f) << "\n";
    os << "pcc_s=" << format_double(r.pcc_s) << "\n";
    os << "mi_f=" << format_double(r.mi_f) << "\n";
    os << "auc_0vnz=" << format_double(r.auc_0vnz) << (r.auc_0vnz_degenerate ? " (degenerate)" : "") << "\n";
    os << "auc_q50=" << format_double(r.auc_q50) << (r.auc_q50_degenerate ? " (degenerate)" : "") << "\n";
    os << "\ngene,pcc,mi,auc_0vnz,auc_q50\n";
    for (const auto& g : r.genes) {
        os << g.gene << "," << format_double(g.pcc) << "," << format_double(g.mi) << ","
           << format_double(g.auc_0vnz) << "," << format_double(g.auc_q50) << "\n";
    }
    return os.str();
}

} // namespace hexst
