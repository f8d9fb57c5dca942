#pragma once

#include "errors.hpp"
#include "hexgeom.hpp"
#include "numerics.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace hexst {

enum class GenePatternKind { boundary, gradient, sparse, noise };

inline const char* to_string(GenePatternKind k) {
    switch (k) {
        case GenePatternKind::boundary: return "boundary";
        case GenePatternKind::gradient: return "gradient";
        case GenePatternKind::sparse: return "sparse";
        case GenePatternKind::noise: return "noise";
    }
    return "?";
}

inline GenePatternKind gene_pattern_from_string(const std::string& s) {
    if (s == "boundary") return GenePatternKind::boundary;
    if (s == "gradient") return GenePatternKind::gradient;
    if (s == "sparse") return GenePatternKind::sparse;
    if (s == "noise") return GenePatternKind::noise;
    throw InputError("unknown gene pattern '" + s + "'");
}

enum class TokenRule { informative, pure_noise };

/**
 * Planted spatial structure of one gene. Positions are normalised lattice
 * positions (exact, pre-jitter) divided by spacing * radius; the "high" side
 * is where dot(normal, p) > offset.
 */
struct GenePattern {
    GenePatternKind kind = GenePatternKind::noise;
    CartesianPoint normal{1.0, 0.0};
    double offset = 0.0;
    double low_mean = 0.0;   // boundary genes: generating mean on each side
    double high_mean = 0.0;

    bool high_side(CartesianPoint p) const { return normal.x1 * p.x1 + normal.x2 * p.x2 > offset; }
};

struct SpotDataset {
    std::vector<std::string> spot_ids;
    std::vector<CartesianPoint> coords;
    Tensor tokens;      // N x D_in
    Tensor expression;  // N x G
    std::optional<Tensor> transcriptomic;  // N x D_t
    std::vector<std::string> gene_names;

    // Generator ground truth; empty for datasets read from disk.
    std::vector<HexCoord> lattice;            // exact generating cell
    std::vector<CartesianPoint> normalized;   // pattern-space position
    std::vector<GenePattern> patterns;

    std::size_t size() const noexcept { return coords.size(); }

    void validate() const {
        const std::size_t n = coords.size();
        if (spot_ids.size() != n || tokens.rows() != n || expression.rows() != n ||
            (transcriptomic && transcriptomic->rows() != n)) {
            throw StructuralError("SpotDataset: row counts disagree");
        }
        if (gene_names.size() != expression.cols()) throw StructuralError("SpotDataset: gene name count mismatch");
    }
};

struct SynthConfig {
    int radius = 10;
    double spacing = 100.0;
    double jitter = 0.0;     // standard deviation as a fraction of spacing
    double dropout = 0.0;
    std::vector<GenePatternKind> genes = default_genes();
    TokenRule tokens = TokenRule::informative;
    int token_dim = 32;
    double token_noise = 0.05;
    int transcriptomic_dim = 16;   // 0 disables the mock embedding
    double noise_sigma = 0.25;     // expression noise
    double boundary_contrast = 2.0;
    CartesianPoint origin{1000.0, 1000.0};
    std::uint64_t seed = 1;        // layout, jitter, dropout and noise
    std::uint64_t map_seed = 7;    // gene patterns and the token map, shared across slides

    static std::vector<GenePatternKind> default_genes() {
        std::vector<GenePatternKind> g;
        for (auto k : {GenePatternKind::boundary, GenePatternKind::gradient, GenePatternKind::sparse,
                       GenePatternKind::noise}) {
            for (int i = 0; i < 4; ++i) g.push_back(k);
        }
        return g;
    }

    void validate() const {
        if (radius < 0) throw InputError("synth: radius must be non-negative");
        if (!(spacing > 0.0)) throw InputError("synth: spacing must be positive");
        if (jitter < 0.0 || jitter >= 0.3) throw InputError("synth: jitter must lie in [0, 0.3)");
        if (dropout < 0.0 || dropout >= 1.0) throw InputError("synth: dropout must lie in [0, 1)");
        if (genes.empty()) throw InputError("synth: at least one gene required");
        if (token_dim < 1) throw InputError("synth: token_dim must be positive");
        if (transcriptomic_dim < 0) throw InputError("synth: transcriptomic_dim must be non-negative");
    }
};

/// Cells of a radius-R hexagon, centre first, then ring by ring.
inline std::vector<HexCoord> hex_spiral(int radius) {
    std::vector<HexCoord> cells{{0, 0}};
    for (int ring = 1; ring <= radius; ++ring) {
        HexCoord c{kHexDirections[4].q * ring, kHexDirections[4].r * ring};
        for (const auto& dir : kHexDirections) {
            for (int step = 0; step < ring; ++step) {
                cells.push_back(c);
                c = c + dir;
            }
        }
    }
    return cells;
}

/**
 * Unit-norm stand-in for a foundation-model embedding of each expression row:
 * centre the row, project with a fixed random matrix, tanh, normalise.
 */
inline Tensor mock_transcriptomic(const Tensor& expression, int dim, std::uint64_t seed) {
    if (dim < 1) throw InputError("mock_transcriptomic: dim must be positive");
    const std::size_t n = expression.rows(), g = expression.cols();
    std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(g)));
    Tensor w = Tensor::matrix(g, static_cast<std::size_t>(dim));
    for (double& v : w.values()) v = normal(rng);

    Tensor centered = expression;
    for (std::size_t i = 0; i < n; ++i) {
        double m = 0.0;
        for (std::size_t j = 0; j < g; ++j) m += centered(i, j);
        m /= static_cast<double>(g);
        for (std::size_t j = 0; j < g; ++j) centered(i, j) -= m;
    }
    Tensor t = matmul(centered, w);
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0.0;
        for (double& v : t.row(i)) {
            v = std::tanh(v);
            norm += v * v;
        }
        norm = std::sqrt(norm);
        if (norm > 0.0) {
            for (double& v : t.row(i)) v /= norm;
        } else {
            t(i, 0) = 1.0;
        }
    }
    return t;
}

inline SpotDataset generate(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::mt19937_64 map_rng(cfg.map_seed);
    std::normal_distribution<double> std_normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const double norm_scale = cfg.spacing * std::max(cfg.radius, 1);
    SpotDataset ds;
    for (const HexCoord& cell : hex_spiral(cfg.radius)) {
        const CartesianPoint exact{cfg.spacing * (cell.q + 0.5 * cell.r), cfg.spacing * std::sqrt(3.0) / 2.0 * cell.r};
        const double jx = cfg.jitter > 0.0 ? std_normal(rng) * cfg.jitter * cfg.spacing : 0.0;
        const double jy = cfg.jitter > 0.0 ? std_normal(rng) * cfg.jitter * cfg.spacing : 0.0;
        const bool keep = cfg.dropout <= 0.0 || unit(rng) >= cfg.dropout;
        if (!keep) continue;
        ds.lattice.push_back(cell);
        ds.normalized.push_back((1.0 / norm_scale) * exact);
        ds.coords.push_back(cfg.origin + exact + CartesianPoint{jx, jy});
    }
    const std::size_t n = ds.coords.size();
    if (n == 0) throw InputError("synth: every spot was dropped");
    for (std::size_t i = 0; i < n; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "spot_%05zu", i);
        ds.spot_ids.emplace_back(buf);
    }

    const std::size_t g = cfg.genes.size();
    for (std::size_t j = 0; j < g; ++j) {
        GenePattern p;
        p.kind = cfg.genes[j];
        const double angle = unit(map_rng) * 2.0 * M_PI;
        p.normal = {std::cos(angle), std::sin(angle)};
        p.offset = (unit(map_rng) - 0.5) * 0.6;
        if (p.kind == GenePatternKind::boundary) {
            p.low_mean = 1.0;
            p.high_mean = 1.0 + cfg.boundary_contrast;
        }
        ds.patterns.push_back(p);
        char buf[48];
        std::snprintf(buf, sizeof(buf), "g%02zu_%s", j, to_string(p.kind));
        ds.gene_names.emplace_back(buf);
    }

    ds.expression = Tensor::matrix(n, g);
    for (std::size_t i = 0; i < n; ++i) {
        const CartesianPoint pos = ds.normalized[i];
        for (std::size_t j = 0; j < g; ++j) {
            const GenePattern& p = ds.patterns[j];
            const double proj = p.normal.x1 * pos.x1 + p.normal.x2 * pos.x2;
            double value = 0.0;
            switch (p.kind) {
                case GenePatternKind::boundary:
                    value = (p.high_side(pos) ? p.high_mean : p.low_mean) + cfg.noise_sigma * std_normal(rng);
                    break;
                case GenePatternKind::gradient:
                    value = 1.5 + proj + cfg.noise_sigma * std_normal(rng);
                    break;
                case GenePatternKind::sparse: {
                    const double prob = 0.15 + (p.high_side(pos) ? 0.35 : 0.0);
                    const double mag = 1.0 + std::abs(std_normal(rng));
                    value = unit(rng) < prob ? mag : 0.0;
                    break;
                }
                case GenePatternKind::noise:
                    value = 1.0 + 2.0 * cfg.noise_sigma * std_normal(rng);
                    break;
            }
            ds.expression(i, j) = std::max(0.0, value);
        }
    }

    const std::size_t d_in = static_cast<std::size_t>(cfg.token_dim);
    if (cfg.tokens == TokenRule::informative) {
        Tensor a = Tensor::matrix(g, d_in);
        std::normal_distribution<double> wdist(0.0, 1.0 / std::sqrt(static_cast<double>(g)));
        for (double& v : a.values()) v = wdist(map_rng);
        ds.tokens = matmul(ds.expression, a);
        for (double& v : ds.tokens.values()) v += cfg.token_noise * std_normal(rng);
    } else {
        ds.tokens = Tensor::matrix(n, d_in);
        for (double& v : ds.tokens.values()) v = std_normal(rng);
    }

    if (cfg.transcriptomic_dim > 0) {
        ds.transcriptomic = mock_transcriptomic(ds.expression, cfg.transcriptomic_dim, cfg.map_seed);
    }
    ds.validate();
    return ds;
}

} // namespace hexst
