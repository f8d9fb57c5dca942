#pragma once

#include "errors.hpp"
#include "hexgeom.hpp"
#include "numerics.hpp"

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace hexst {

/**
 * Channel layout for rotary encoding of one attention head.
 *
 * Channels are laid out as `axes` consecutive blocks of `axis_channels`
 * followed by `remainder` channels that are never rotated.
 */
struct RopeConfig {
    int head_dim = 0;
    double base = 10000.0;
    int axes = 3;
    int axis_channels = 0;
    int remainder = 0;

    void validate() const {
        if (axes * axis_channels + remainder != head_dim || axis_channels % 2 != 0 || axis_channels < 0 ||
            remainder < 0) {
            throw StructuralError("RopeConfig: inconsistent channel split");
        }
        if (!(base > 0.0)) throw InputError("RopeConfig: base must be positive");
    }
};

/// Three cube axes, 2*floor(D_H/6) channels each.
inline RopeConfig make_hexrope_config(int head_dim, double base = 10000.0) {
    if (head_dim < 1) throw InputError("head_dim must be positive");
    RopeConfig cfg{head_dim, base, 3, 2 * (head_dim / 6), 0};
    cfg.remainder = head_dim - 3 * cfg.axis_channels;
    return cfg;
}

/// Two Cartesian axes, 2*floor(D_H/4) channels each.
inline RopeConfig make_rope2d_config(int head_dim, double base = 10000.0) {
    if (head_dim < 1) throw InputError("head_dim must be positive");
    RopeConfig cfg{head_dim, base, 2, 2 * (head_dim / 4), 0};
    cfg.remainder = head_dim - 2 * cfg.axis_channels;
    return cfg;
}

/// theta_k = delta * base^(-2k / channels), k = 0 .. channels/2 - 1
inline std::vector<double> rope_angles(int channels, double base, double delta) {
    std::vector<double> out(static_cast<std::size_t>(channels / 2));
    for (int k = 0; k < channels / 2; ++k) {
        out[static_cast<std::size_t>(k)] = delta * std::pow(base, -2.0 * k / channels);
    }
    return out;
}

inline std::vector<double> rope_angles(const RopeConfig& cfg, double delta) {
    return rope_angles(cfg.axis_channels, cfg.base, delta);
}

struct CubeOffset {
    int du = 0;
    int dv = 0;
    int dw = 0;

    static CubeOffset from_axial(HexCoord offset) { return {offset.q, offset.r, -offset.q - offset.r}; }
};

struct PlanarOffset {
    double dx = 0.0;
    double dy = 0.0;
};

/**
 * Precomputed per-row rotations. Rotating with `inverse` applies the
 * transpose, which is also the backward pass of the forward rotation.
 */
class RotaryTable {
public:
    RotaryTable() = default;

    static RotaryTable hex(const RopeConfig& cfg, std::span<const CubeOffset> offsets) {
        cfg.validate();
        if (cfg.axes != 3) throw StructuralError("hex rotary table needs a three-axis config");
        RotaryTable t(cfg, offsets.size());
        for (std::size_t i = 0; i < offsets.size(); ++i) {
            const auto& o = offsets[i];
            if (o.du + o.dv + o.dw != 0) {
                throw InputError("cube offset (" + std::to_string(o.du) + "," + std::to_string(o.dv) + "," +
                                 std::to_string(o.dw) + ") does not sum to zero");
            }
            t.fill_row(i, {static_cast<double>(o.du), static_cast<double>(o.dv), static_cast<double>(o.dw)});
        }
        return t;
    }

    static RotaryTable planar(const RopeConfig& cfg, std::span<const PlanarOffset> offsets) {
        cfg.validate();
        if (cfg.axes != 2) throw StructuralError("planar rotary table needs a two-axis config");
        RotaryTable t(cfg, offsets.size());
        for (std::size_t i = 0; i < offsets.size(); ++i) {
            if (!std::isfinite(offsets[i].dx) || !std::isfinite(offsets[i].dy)) {
                throw InputError("planar offset is not finite");
            }
            t.fill_row(i, {offsets[i].dx, offsets[i].dy});
        }
        return t;
    }

    std::size_t rows() const noexcept { return rows_; }

    /// Rotate columns [col, col + head_dim) of every row of `x` in place.
    void rotate(Tensor& x, std::size_t col, bool inverse = false) const {
        if (x.rows() != rows_ || col + static_cast<std::size_t>(cfg_.head_dim) > x.cols()) {
            throw StructuralError("RotaryTable::rotate: shape mismatch");
        }
        const std::size_t half = static_cast<std::size_t>(cfg_.axis_channels / 2);
        const std::size_t per_row = half * static_cast<std::size_t>(cfg_.axes);
        const double sign = inverse ? -1.0 : 1.0;
        for (std::size_t i = 0; i < rows_; ++i) {
            double* h = &x(i, col);
            const double* c = &cos_[i * per_row];
            const double* s = &sin_[i * per_row];
            for (std::size_t a = 0; a < static_cast<std::size_t>(cfg_.axes); ++a) {
                double* block = h + a * static_cast<std::size_t>(cfg_.axis_channels);
                for (std::size_t k = 0; k < half; ++k) {
                    const double cs = c[a * half + k];
                    const double sn = sign * s[a * half + k];
                    const double x0 = block[2 * k], x1 = block[2 * k + 1];
                    block[2 * k] = cs * x0 - sn * x1;
                    block[2 * k + 1] = sn * x0 + cs * x1;
                }
            }
        }
    }

private:
    RotaryTable(const RopeConfig& cfg, std::size_t rows)
        : cfg_(cfg), rows_(rows),
          cos_(rows * static_cast<std::size_t>(cfg.axes * (cfg.axis_channels / 2))),
          sin_(cos_.size()) {}

    void fill_row(std::size_t i, std::initializer_list<double> deltas) {
        const std::size_t half = static_cast<std::size_t>(cfg_.axis_channels / 2);
        const std::size_t per_row = half * static_cast<std::size_t>(cfg_.axes);
        std::size_t a = 0;
        for (double d : deltas) {
            const auto angles = rope_angles(cfg_, d);
            for (std::size_t k = 0; k < half; ++k) {
                cos_[i * per_row + a * half + k] = std::cos(angles[k]);
                sin_[i * per_row + a * half + k] = std::sin(angles[k]);
            }
            ++a;
        }
    }

    RopeConfig cfg_;
    std::size_t rows_ = 0;
    std::vector<double> cos_;
    std::vector<double> sin_;
};

/// Rotate per-head features (rows x D_H) by their cube offsets.
inline Tensor apply_hexrope(const Tensor& h, std::span<const CubeOffset> offsets, const RopeConfig& cfg) {
    if (h.cols() != static_cast<std::size_t>(cfg.head_dim)) throw StructuralError("apply_hexrope: head_dim mismatch");
    if (h.rows() != offsets.size()) throw StructuralError("apply_hexrope: one offset per row required");
    Tensor out = h;
    RotaryTable::hex(cfg, offsets).rotate(out, 0);
    return out;
}

inline Tensor apply_rope2d(const Tensor& h, std::span<const PlanarOffset> offsets, const RopeConfig& cfg) {
    if (h.cols() != static_cast<std::size_t>(cfg.head_dim)) throw StructuralError("apply_rope2d: head_dim mismatch");
    if (h.rows() != offsets.size()) throw StructuralError("apply_rope2d: one offset per row required");
    Tensor out = h;
    RotaryTable::planar(cfg, offsets).rotate(out, 0);
    return out;
}

} // namespace hexst
