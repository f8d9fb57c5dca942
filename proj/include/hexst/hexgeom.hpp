#pragma once

#include "errors.hpp"

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace hexst {

struct CartesianPoint {
    double x1 = 0.0;
    double x2 = 0.0;

    friend bool operator==(const CartesianPoint&, const CartesianPoint&) = default;
};

inline CartesianPoint operator+(CartesianPoint a, CartesianPoint b) { return {a.x1 + b.x1, a.x2 + b.x2}; }
inline CartesianPoint operator-(CartesianPoint a, CartesianPoint b) { return {a.x1 - b.x1, a.x2 - b.x2}; }
inline CartesianPoint operator*(double s, CartesianPoint a) { return {s * a.x1, s * a.x2}; }

inline double squared_distance(CartesianPoint a, CartesianPoint b) {
    const double dx = a.x1 - b.x1, dy = a.x2 - b.x2;
    return dx * dx + dy * dy;
}

inline double distance(CartesianPoint a, CartesianPoint b) { return std::sqrt(squared_distance(a, b)); }

/// Axial lattice coordinate; cube components are (q, r, -q-r).
struct HexCoord {
    int q = 0;
    int r = 0;

    constexpr int u() const noexcept { return q; }
    constexpr int v() const noexcept { return r; }
    constexpr int w() const noexcept { return -q - r; }

    friend constexpr auto operator<=>(const HexCoord&, const HexCoord&) = default;
};

constexpr HexCoord operator+(HexCoord a, HexCoord b) { return {a.q + b.q, a.r + b.r}; }
constexpr HexCoord operator-(HexCoord a, HexCoord b) { return {a.q - b.q, a.r - b.r}; }

/// The six lattice neighbours in axial offsets.
inline constexpr HexCoord kHexDirections[6] = {{1, 0}, {1, -1}, {0, -1}, {-1, 0}, {-1, 1}, {0, 1}};

struct LatticeScale {
    double d_med = 1.0;   // median k-th nearest neighbour distance
    double s_spot = 1.0;  // hexagon side length, d_med / sqrt(3)
    CartesianPoint anchor;
};

struct FractionalAxial {
    double q = 0.0;
    double r = 0.0;
};

namespace detail {

// Lower-middle element for even lengths.
inline double lower_median(std::vector<double> values) {
    const std::size_t mid = (values.size() - 1) / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    return values[mid];
}

} // namespace detail

/**
 * Estimate the lattice spacing as the median distance to the k-th nearest
 * neighbour (exhaustive search). The anchor is the point at `anchor_index`,
 * which defaults to the first point in input order.
 */
inline LatticeScale estimate_scale(std::span<const CartesianPoint> points, int k = 6, std::size_t anchor_index = 0) {
    if (k < 1) throw InputError("estimate_scale: k must be at least 1");
    if (points.size() < static_cast<std::size_t>(k) + 1) {
        throw InputError("estimate_scale: need at least " + std::to_string(k + 1) + " points, got " +
                         std::to_string(points.size()));
    }
    if (anchor_index >= points.size()) throw InputError("estimate_scale: anchor index out of range");

    const std::size_t n = points.size();
    std::vector<double> kth(n);
    std::vector<double> dists(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t m = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) dists[m++] = distance(points[i], points[j]);
        }
        std::nth_element(dists.begin(), dists.begin() + (k - 1), dists.end());
        kth[i] = dists[static_cast<std::size_t>(k - 1)];
    }
    const double d_med = detail::lower_median(std::move(kth));
    if (!(d_med > 0.0)) throw DegenerateInputError("estimate_scale: median neighbour distance is zero");
    return {d_med, d_med / std::sqrt(3.0), points[anchor_index]};
}

/// Pointy-top conversion of an anchor-relative, side-normalised point.
inline FractionalAxial cartesian_to_axial_frac(CartesianPoint p, const LatticeScale& scale) {
    const double x1 = (p.x1 - scale.anchor.x1) / scale.s_spot;
    const double x2 = (p.x2 - scale.anchor.x2) / scale.s_spot;
    return {std::sqrt(3.0) / 3.0 * x1 - x2 / 3.0, 2.0 / 3.0 * x2};
}

/// Cartesian centre of a lattice cell (inverse of the conversion above).
inline CartesianPoint axial_to_cartesian(HexCoord c, const LatticeScale& scale) {
    const double x1 = std::sqrt(3.0) * (c.q + 0.5 * c.r);
    const double x2 = 1.5 * c.r;
    return {scale.anchor.x1 + x1 * scale.s_spot, scale.anchor.x2 + x2 * scale.s_spot};
}

/**
 * Round fractional cube coordinates to the nearest lattice cell.
 *
 * The component with the largest rounding error is recomputed from the other
 * two so that u + v + w == 0. Ties go to the lowest axis index (u, then v).
 */
/// Rounds onto a 2^-30 grid; values that tie in exact arithmetic then tie exactly.
inline double snap_tie(double x) { return std::round(x * 0x1p30) / 0x1p30; }

inline HexCoord cube_round(double q_frac, double r_frac) {
    q_frac = snap_tie(q_frac);
    r_frac = snap_tie(r_frac);
    const double w_frac = -q_frac - r_frac;
    double u = std::round(q_frac);
    double v = std::round(r_frac);
    double w = std::round(w_frac);
    const double du = std::abs(u - q_frac);
    const double dv = std::abs(v - r_frac);
    const double dw = std::abs(w - w_frac);
    if (du >= dv && du >= dw) {
        u = -v - w;
    } else if (dv >= dw) {
        v = -u - w;
    }
    // w is implied by (u, v) either way.
    return {static_cast<int>(u), static_cast<int>(v)};
}

inline HexCoord cube_round(FractionalAxial f) { return cube_round(f.q, f.r); }

inline HexCoord to_lattice(CartesianPoint p, const LatticeScale& scale) {
    return cube_round(cartesian_to_axial_frac(p, scale));
}

inline int hex_distance(HexCoord a, HexCoord b) {
    const int dq = a.q - b.q;
    const int dr = a.r - b.r;
    return std::max({std::abs(dq), std::abs(dr), std::abs(dq + dr)});
}

inline int hex_norm(HexCoord offset) { return hex_distance(offset, HexCoord{0, 0}); }

struct BoundingBox {
    CartesianPoint lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    CartesianPoint hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};

    void extend(CartesianPoint p) {
        lo.x1 = std::min(lo.x1, p.x1);
        lo.x2 = std::min(lo.x2, p.x2);
        hi.x1 = std::max(hi.x1, p.x1);
        hi.x2 = std::max(hi.x2, p.x2);
    }

    bool valid() const { return lo.x1 <= hi.x1 && lo.x2 <= hi.x2; }

    double distance_to(CartesianPoint p) const {
        const double dx = std::max({lo.x1 - p.x1, 0.0, p.x1 - hi.x1});
        const double dy = std::max({lo.x2 - p.x2, 0.0, p.x2 - hi.x2});
        return std::sqrt(dx * dx + dy * dy);
    }
};

inline BoundingBox bounding_box(std::span<const CartesianPoint> points) {
    BoundingBox box;
    for (const auto& p : points) box.extend(p);
    return box;
}

/// A spot located both in the plane and on the lattice.
struct Spot {
    CartesianPoint pos;
    HexCoord cell;
};

inline std::vector<Spot> encode_spots(std::span<const CartesianPoint> points, const LatticeScale& scale) {
    std::vector<Spot> spots;
    spots.reserve(points.size());
    for (const auto& p : points) spots.push_back({p, to_lattice(p, scale)});
    return spots;
}

} // namespace hexst
