#pragma once

#include "errors.hpp"
#include "hexgeom.hpp"
#include "numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hexst {

/// Radius-K hexagon of axial offsets in lexicographic (dq, dr) order.
class SlotSet {
public:
    SlotSet() : SlotSet(0) {}

    explicit SlotSet(int radius) : radius_(radius) {
        if (radius < 0) throw InputError("SlotSet: radius must be non-negative");
        const int side = 2 * radius + 1;
        lookup_.assign(static_cast<std::size_t>(side) * side, -1);
        for (int dq = -radius; dq <= radius; ++dq) {
            for (int dr = -radius; dr <= radius; ++dr) {
                if (hex_norm({dq, dr}) <= radius) {
                    lookup_[table_index(dq, dr)] = static_cast<int>(offsets_.size());
                    offsets_.push_back({dq, dr});
                }
            }
        }
    }

    int radius() const noexcept { return radius_; }
    std::size_t size() const noexcept { return offsets_.size(); }
    const std::vector<HexCoord>& offsets() const noexcept { return offsets_; }
    HexCoord offset(std::size_t slot) const { return offsets_.at(slot); }

    /// Slot of an offset, or -1 if it lies outside the hexagon.
    int index_of(HexCoord offset) const {
        if (std::abs(offset.q) > radius_ || std::abs(offset.r) > radius_) return -1;
        return lookup_[table_index(offset.q, offset.r)];
    }

private:
    std::size_t table_index(int dq, int dr) const {
        const int side = 2 * radius_ + 1;
        return static_cast<std::size_t>((dq + radius_) * side + (dr + radius_));
    }

    int radius_ = 0;
    std::vector<HexCoord> offsets_;
    std::vector<int> lookup_;
};

inline SlotSet build_slot_set(int radius) { return SlotSet(radius); }

inline std::size_t slot_count(int radius) {
    return static_cast<std::size_t>(3 * radius * radius + 3 * radius + 1);
}

// ---------------------------------------------------------------------------
// Centre lattice and shift schedule

struct CenterBasis {
    CartesianPoint e1;
    CartesianPoint e2;
};

inline CenterBasis center_basis(const LatticeScale& scale, int radius) {
    const double s = radius * scale.s_spot;
    return {{0.0, std::sqrt(3.0) * s}, {1.5 * s, std::sqrt(3.0) / 2.0 * s}};
}

/// Block b (zero based) of every stage uses shift b mod 3: 0, e1/2, e2/2.
inline int shift_for_block(int block) { return block % 3; }

inline CartesianPoint shift_offset(const CenterBasis& basis, int shift) {
    switch (shift) {
        case 0: return {0.0, 0.0};
        case 1: return 0.5 * basis.e1;
        case 2: return 0.5 * basis.e2;
        default: throw InputError("shift id must be 0, 1 or 2");
    }
}

struct WindowCenter {
    int alpha = 0;
    int beta = 0;
    CartesianPoint pos;
};

/**
 * Enumerate centres anchor + alpha e1 + beta e2 + delta lying within one
 * centre spacing (sqrt(3) K s_spot) of the bounding box, ordered by (alpha, beta).
 */
inline std::vector<WindowCenter> generate_centers(const LatticeScale& scale, int radius, int shift,
                                                  const BoundingBox& bounds) {
    if (radius < 1) throw InputError("generate_centers: radius must be at least 1");
    if (!bounds.valid()) throw InputError("generate_centers: empty bounding box");
    const CenterBasis basis = center_basis(scale, radius);
    const CartesianPoint origin = scale.anchor + shift_offset(basis, shift);
    const double reach = std::sqrt(3.0) * radius * scale.s_spot;

    // x depends only on beta; y on both.
    const double bx = basis.e2.x1;
    const int beta_lo = static_cast<int>(std::floor((bounds.lo.x1 - reach - origin.x1) / bx)) - 1;
    const int beta_hi = static_cast<int>(std::ceil((bounds.hi.x1 + reach - origin.x1) / bx)) + 1;
    const double ay = basis.e1.x2;

    std::vector<WindowCenter> centers;
    int alpha_lo = std::numeric_limits<int>::max(), alpha_hi = std::numeric_limits<int>::min();
    for (int beta = beta_lo; beta <= beta_hi; ++beta) {
        const double y0 = origin.x2 + beta * basis.e2.x2;
        alpha_lo = std::min(alpha_lo, static_cast<int>(std::floor((bounds.lo.x2 - reach - y0) / ay)) - 1);
        alpha_hi = std::max(alpha_hi, static_cast<int>(std::ceil((bounds.hi.x2 + reach - y0) / ay)) + 1);
    }
    for (int alpha = alpha_lo; alpha <= alpha_hi; ++alpha) {
        for (int beta = beta_lo; beta <= beta_hi; ++beta) {
            const CartesianPoint c = origin + static_cast<double>(alpha) * basis.e1 + static_cast<double>(beta) * basis.e2;
            if (snap_tie(bounds.distance_to(c) / reach) <= 1.0) centers.push_back({alpha, beta, c});
        }
    }
    return centers;
}

// ---------------------------------------------------------------------------
// Partitions

enum class CollisionMode { strict, lenient };

struct Window {
    CartesianPoint center;
    HexCoord center_cell;
    std::vector<int> slot_spot;  // spot index per slot, -1 when empty

    std::size_t occupied() const {
        return static_cast<std::size_t>(std::count_if(slot_spot.begin(), slot_spot.end(), [](int s) { return s >= 0; }));
    }
};

/**
 * Assignment of spots to windows and slots for one (stage, block).
 *
 * window_of_spot / slot_of_spot are -1 only for spots dropped in lenient
 * collision mode.
 */
struct WindowPartition {
    int stage = 0;
    int block = 0;
    int shift_id = 0;
    int radius = 0;                      // slot-set radius
    std::shared_ptr<const SlotSet> slots;
    std::vector<int> window_of_spot;
    std::vector<int> slot_of_spot;
    std::vector<Window> windows;
    std::size_t dropped = 0;
    std::size_t rerouted = 0;

    std::size_t window_count() const noexcept { return windows.size(); }

    Mask occupancy(std::size_t w) const {
        const auto& ss = windows.at(w).slot_spot;
        Mask m({ss.size()}, false);
        for (std::size_t s = 0; s < ss.size(); ++s) m.set(s, ss[s] >= 0);
        return m;
    }

    friend bool operator==(const WindowPartition& a, const WindowPartition& b) {
        if (a.stage != b.stage || a.block != b.block || a.shift_id != b.shift_id || a.radius != b.radius ||
            a.window_of_spot != b.window_of_spot || a.slot_of_spot != b.slot_of_spot ||
            a.windows.size() != b.windows.size() || a.dropped != b.dropped) {
            return false;
        }
        for (std::size_t w = 0; w < a.windows.size(); ++w) {
            const auto& x = a.windows[w];
            const auto& y = b.windows[w];
            if (!(x.center == y.center) || x.center_cell != y.center_cell || x.slot_spot != y.slot_spot) return false;
        }
        return true;
    }
};

namespace detail {

struct RawCenter {
    CartesianPoint pos;
    HexCoord cell;
};

// Candidate-level assignment, before empty windows are compacted away.
struct RawAssignment {
    std::vector<int> center_of_spot;
    std::vector<int> slot_of_spot;
};

inline void resolve_and_pack(std::span<const Spot> spots, const std::vector<RawCenter>& centers,
                             const SlotSet& slots, const std::vector<std::vector<int>>& ranked_centers,
                             CollisionMode mode, const LatticeScale& scale, WindowPartition& out) {
    const std::size_t n = spots.size();
    std::vector<int> center_of(n, -1), slot_of(n, -1);
    // occupant[(center, slot)] -> spot
    std::map<std::pair<int, int>, int> occupant;

    auto slot_for = [&](std::size_t i, int c) {
        return slots.index_of(spots[i].cell - centers[static_cast<std::size_t>(c)].cell);
    };

    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < n; ++i) {
        const int c = ranked_centers[i].front();
        const int s = slot_for(i, c);
        if (s < 0) {
            throw ConsistencyError("spot " + std::to_string(i) + " lies outside the radius-" +
                                   std::to_string(slots.radius()) + " slot set of its nearest window centre");
        }
        auto [it, inserted] = occupant.emplace(std::make_pair(c, s), static_cast<int>(i));
        if (!inserted) {
            if (mode == CollisionMode::strict) {
                throw SlotCollisionError("spots " + std::to_string(it->second) + " and " + std::to_string(i) +
                                         " map to the same slot of window centre " + std::to_string(c));
            }
            // Keep whichever spot sits closer to the cell centre.
            const std::size_t other = static_cast<std::size_t>(it->second);
            const CartesianPoint cell_pos = axial_to_cartesian(spots[i].cell, scale);
            if (squared_distance(spots[i].pos, cell_pos) < squared_distance(spots[other].pos, cell_pos)) {
                it->second = static_cast<int>(i);
                center_of[other] = -1;
                slot_of[other] = -1;
                pending.push_back(other);
            } else {
                pending.push_back(i);
                continue;
            }
        }
        center_of[i] = c;
        slot_of[i] = s;
    }

    for (std::size_t i : pending) {
        bool placed = false;
        if (ranked_centers[i].size() > 1) {
            const int c = ranked_centers[i][1];
            const int s = slot_for(i, c);
            if (s >= 0 && occupant.emplace(std::make_pair(c, s), static_cast<int>(i)).second) {
                center_of[i] = c;
                slot_of[i] = s;
                placed = true;
                ++out.rerouted;
            }
        }
        if (!placed) ++out.dropped;
    }

    // Compact: keep non-empty windows in centre order.
    std::vector<int> window_of_center(centers.size(), -1);
    for (std::size_t i = 0; i < n; ++i) {
        if (center_of[i] >= 0) window_of_center[static_cast<std::size_t>(center_of[i])] = 0;
    }
    for (std::size_t c = 0; c < centers.size(); ++c) {
        if (window_of_center[c] < 0) continue;
        window_of_center[c] = static_cast<int>(out.windows.size());
        out.windows.push_back({centers[c].pos, centers[c].cell, std::vector<int>(slots.size(), -1)});
    }
    out.window_of_spot.assign(n, -1);
    out.slot_of_spot.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        if (center_of[i] < 0) continue;
        const int w = window_of_center[static_cast<std::size_t>(center_of[i])];
        out.window_of_spot[i] = w;
        out.slot_of_spot[i] = slot_of[i];
        out.windows[static_cast<std::size_t>(w)].slot_spot[static_cast<std::size_t>(slot_of[i])] = static_cast<int>(i);
    }
}

} // namespace detail

/**
 * Voronoi-style hexagonal partition: each spot goes to its nearest (shifted)
 * centre, ties to the lowest centre index, and is packed into the slot given
 * by its cell offset from the centre's cell.
 */
inline WindowPartition partition(std::span<const Spot> spots, const LatticeScale& scale, int radius, int shift,
                                 CollisionMode mode = CollisionMode::strict) {
    if (spots.empty()) throw InputError("partition: no spots");
    BoundingBox box;
    for (const auto& s : spots) box.extend(s.pos);
    const auto centers = generate_centers(scale, radius, shift, box);

    std::map<std::pair<int, int>, int> index_of;
    std::vector<detail::RawCenter> raw;
    raw.reserve(centers.size());
    for (std::size_t c = 0; c < centers.size(); ++c) {
        index_of[{centers[c].alpha, centers[c].beta}] = static_cast<int>(c);
        raw.push_back({centers[c].pos, to_lattice(centers[c].pos, scale)});
    }

    // Fractional centre-lattice coordinates; the nearest centres are within +-1 of them.
    const CenterBasis basis = center_basis(scale, radius);
    const CartesianPoint origin = scale.anchor + shift_offset(basis, shift);
    const double det = basis.e1.x1 * basis.e2.x2 - basis.e1.x2 * basis.e2.x1;

    std::vector<std::vector<int>> ranked(spots.size());
    for (std::size_t i = 0; i < spots.size(); ++i) {
        const CartesianPoint d = spots[i].pos - origin;
        const double beta = (basis.e1.x1 * d.x2 - basis.e1.x2 * d.x1) / det;
        const double alpha = (d.x1 * basis.e2.x2 - d.x2 * basis.e2.x1) / det;
        const int a0 = static_cast<int>(std::floor(alpha));
        const int b0 = static_cast<int>(std::floor(beta));
        std::vector<std::pair<double, int>> cands;
        for (int a = a0 - 1; a <= a0 + 2; ++a) {
            for (int b = b0 - 1; b <= b0 + 2; ++b) {
                auto it = index_of.find({a, b});
                if (it == index_of.end()) continue;
                const double d2 = squared_distance(spots[i].pos, raw[static_cast<std::size_t>(it->second)].pos);
                cands.emplace_back(snap_tie(d2 / (scale.d_med * scale.d_med)), it->second);
            }
        }
        if (cands.empty()) throw ConsistencyError("partition: no window centre near spot " + std::to_string(i));
        std::sort(cands.begin(), cands.end());
        for (const auto& [d2, c] : cands) ranked[i].push_back(c);
    }

    WindowPartition out;
    out.shift_id = shift;
    out.radius = radius;
    auto slots = std::make_shared<const SlotSet>(radius);
    detail::resolve_and_pack(spots, raw, *slots, ranked, mode, scale, out);
    out.slots = std::move(slots);
    return out;
}

/// Tile side (in units of d_med) whose area matches a radius-K Voronoi window.
inline int matched_square_side(int radius) {
    const double side = radius * std::sqrt(std::sqrt(3.0) / 2.0);
    return std::max(1, static_cast<int>(std::lround(side)));
}

inline CartesianPoint square_shift_offset(double tile, int shift) {
    switch (shift) {
        case 0: return {0.0, 0.0};
        case 1: return {0.5 * tile, 0.5 * tile};
        case 2: return {0.5 * tile, 0.0};
        default: throw InputError("shift id must be 0, 1 or 2");
    }
}

/**
 * Axis-aligned square tiling with tile side `side * d_med`, anchored at the
 * anchor plus a half-tile shift. Slots use a hexagon just large enough to hold
 * every cell of a tile, so the packing contract matches the hexagonal case.
 */
inline WindowPartition partition_square(std::span<const Spot> spots, const LatticeScale& scale, int side, int shift,
                                        CollisionMode mode = CollisionMode::strict) {
    if (side < 1) throw InputError("partition_square: side must be at least 1");
    if (spots.empty()) throw InputError("partition_square: no spots");
    const double tile = side * scale.d_med;
    const CartesianPoint origin = scale.anchor + square_shift_offset(tile, shift);
    const int radius = static_cast<int>(std::ceil((tile / std::sqrt(2.0) + 2.0 * scale.s_spot) / (1.5 * scale.s_spot)));

    std::map<std::pair<long, long>, int> tile_index;
    std::vector<std::pair<long, long>> tile_of(spots.size());
    for (std::size_t i = 0; i < spots.size(); ++i) {
        const CartesianPoint d = spots[i].pos - origin;
        tile_of[i] = {static_cast<long>(std::floor(snap_tie(d.x1 / tile))), static_cast<long>(std::floor(snap_tie(d.x2 / tile)))};
        tile_index.emplace(tile_of[i], 0);
    }
    std::vector<detail::RawCenter> raw;
    for (auto& [key, idx] : tile_index) {
        idx = static_cast<int>(raw.size());
        const CartesianPoint c = origin + CartesianPoint{(key.first + 0.5) * tile, (key.second + 0.5) * tile};
        raw.push_back({c, to_lattice(c, scale)});
    }
    // Second choice for rerouting: nearest other tile centre.
    std::vector<std::vector<int>> ranked(spots.size());
    for (std::size_t i = 0; i < spots.size(); ++i) {
        const int own = tile_index.at(tile_of[i]);
        ranked[i].push_back(own);
        double best = std::numeric_limits<double>::infinity();
        int second = -1;
        for (long dx = -1; dx <= 1; ++dx) {
            for (long dy = -1; dy <= 1; ++dy) {
                if (dx == 0 && dy == 0) continue;
                auto it = tile_index.find({tile_of[i].first + dx, tile_of[i].second + dy});
                if (it == tile_index.end()) continue;
                const double d2 = snap_tie(squared_distance(spots[i].pos, raw[static_cast<std::size_t>(it->second)].pos) /
                                           (scale.d_med * scale.d_med));
                if (d2 < best || (d2 == best && it->second < second)) {
                    best = d2;
                    second = it->second;
                }
            }
        }
        if (second >= 0) ranked[i].push_back(second);
    }

    WindowPartition out;
    out.shift_id = shift;
    out.radius = radius;
    auto slots = std::make_shared<const SlotSet>(radius);
    detail::resolve_and_pack(spots, raw, *slots, ranked, mode, scale, out);
    out.slots = std::move(slots);
    return out;
}

/// Check the partition contract; returns an empty string when sound.
inline std::string verify_partition(const WindowPartition& p, std::span<const Spot> spots) {
    if (p.window_of_spot.size() != spots.size()) return "window_of_spot length mismatch";
    std::vector<int> seen(spots.size(), 0);
    for (std::size_t w = 0; w < p.windows.size(); ++w) {
        const auto& win = p.windows[w];
        if (win.slot_spot.size() != p.slots->size()) return "window slot layout size mismatch";
        bool any = false;
        for (std::size_t s = 0; s < win.slot_spot.size(); ++s) {
            const int i = win.slot_spot[s];
            if (i < 0) continue;
            any = true;
            const auto si = static_cast<std::size_t>(i);
            if (++seen[si] > 1) return "spot " + std::to_string(i) + " appears twice";
            if (p.window_of_spot[si] != static_cast<int>(w) || p.slot_of_spot[si] != static_cast<int>(s)) {
                return "spot " + std::to_string(i) + " index maps disagree with window contents";
            }
            const HexCoord off = spots[si].cell - win.center_cell;
            if (off != p.slots->offset(s)) return "spot " + std::to_string(i) + " is in the wrong slot";
            if (hex_norm(off) > p.radius) return "spot " + std::to_string(i) + " exceeds the slot radius";
        }
        if (!any) return "window " + std::to_string(w) + " is empty";
    }
    std::size_t missing = 0;
    for (std::size_t i = 0; i < spots.size(); ++i) missing += seen[i] == 0;
    if (missing != p.dropped) return std::to_string(missing) + " spots unassigned";
    return {};
}

} // namespace hexst
