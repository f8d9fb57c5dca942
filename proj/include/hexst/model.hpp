#pragma once

#include "errors.hpp"
#include "hexgeom.hpp"
#include "hexrope.hpp"
#include "numerics.hpp"
#include "windowing.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hexst {

enum class WindowKind { hex, square };
enum class PeKind { hexrope, rope2d };

/**
 * Architecture of the staged window transformer.
 *
 * Stages 0 .. stages-2 use windows of radius radii[l] (or square tiles of
 * square_sides[l] spacings); the last stage attends globally over all spots.
 */
struct ModelConfig {
    int stages = 4;
    int blocks = 3;
    int input_dim = 32;
    int dim = 32;
    int heads = 2;
    std::vector<int> radii{1, 2, 4};
    std::vector<int> square_sides;  // empty: area-matched to radii
    int out_dim = 16;
    int genes = 16;
    int transcriptomic_dim = 16;
    int mlp_layers = 2;
    int ffn_mult = 4;
    double rope_base = 10000.0;
    double ln_eps = 1e-5;
    WindowKind window = WindowKind::hex;
    PeKind pe = PeKind::hexrope;
    int knn_k = 3;
    CollisionMode collisions = CollisionMode::strict;

    int head_dim() const { return dim / heads; }

    int square_side(int stage) const {
        if (!square_sides.empty()) return square_sides.at(static_cast<std::size_t>(stage));
        return matched_square_side(radii.at(static_cast<std::size_t>(stage)));
    }

    RopeConfig rope() const {
        return pe == PeKind::hexrope ? make_hexrope_config(head_dim(), rope_base) : make_rope2d_config(head_dim(), rope_base);
    }

    void validate() const {
        if (stages < 1 || blocks < 1) throw StructuralError("model: stages and blocks must be positive");
        if (heads < 1 || dim < 1 || dim % heads != 0) throw StructuralError("model: dim must be a multiple of heads");
        if (radii.size() != static_cast<std::size_t>(stages - 1)) {
            throw StructuralError("model: need one window radius per non-final stage");
        }
        for (int k : radii) {
            if (k < 1) throw StructuralError("model: window radii must be at least 1");
        }
        if (!square_sides.empty() && square_sides.size() != radii.size()) {
            throw StructuralError("model: square_sides must match radii in length");
        }
        if (input_dim < 1 || out_dim < 1 || genes < 1 || transcriptomic_dim < 0 || mlp_layers < 1 || ffn_mult < 1) {
            throw StructuralError("model: dimensions must be positive");
        }
    }
};

// ---------------------------------------------------------------------------
// Parameters

/// Named tensors in a fixed insertion order.
class ParamSet {
public:
    Tensor& add(const std::string& name, Tensor t) {
        if (index_.count(name)) throw StructuralError("duplicate parameter " + name);
        index_[name] = tensors_.size();
        names_.push_back(name);
        tensors_.push_back(std::move(t));
        return tensors_.back();
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Tensor& operator[](const std::string& name) { return tensors_[lookup(name)]; }
    const Tensor& operator[](const std::string& name) const { return tensors_[lookup(name)]; }

    std::size_t size() const noexcept { return tensors_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    Tensor& at(std::size_t i) { return tensors_[i]; }
    const Tensor& at(std::size_t i) const { return tensors_[i]; }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& t : tensors_) n += t.size();
        return n;
    }

    ParamSet zeros_like() const {
        ParamSet out;
        for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], Tensor(tensors_[i].shape()));
        return out;
    }

    friend bool operator==(const ParamSet& a, const ParamSet& b) {
        return a.names_ == b.names_ && a.tensors_ == b.tensors_;
    }

private:
    std::size_t lookup(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw StructuralError("unknown parameter " + name);
        return it->second;
    }

    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
    std::map<std::string, std::size_t> index_;
};

inline std::string block_prefix(int stage, int block) {
    return "stage" + std::to_string(stage) + ".block" + std::to_string(block) + ".";
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases; layer norms start at identity.
inline ParamSet init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    ParamSet p;
    auto dense = [&](const std::string& name, int fan_in, int fan_out) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Tensor w = Tensor::matrix(static_cast<std::size_t>(fan_in), static_cast<std::size_t>(fan_out));
        for (double& v : w.values()) v = dist(rng);
        Tensor b({static_cast<std::size_t>(fan_out)});
        for (double& v : b.values()) v = dist(rng);
        p.add(name + ".w", std::move(w));
        p.add(name + ".b", std::move(b));
    };
    auto norm = [&](const std::string& name, int d) {
        p.add(name + ".gain", Tensor({static_cast<std::size_t>(d)}, 1.0));
        p.add(name + ".bias", Tensor({static_cast<std::size_t>(d)}, 0.0));
    };

    const int d = cfg.dim;
    dense("embed", cfg.input_dim, d);
    for (int l = 0; l < cfg.stages; ++l) {
        for (int b = 0; b < cfg.blocks; ++b) {
            const std::string pre = block_prefix(l, b);
            norm(pre + "ln1", d);
            dense(pre + "attn.q", d, d);
            dense(pre + "attn.k", d, d);
            dense(pre + "attn.v", d, d);
            dense(pre + "attn.o", d, d);
            norm(pre + "ln2", d);
            dense(pre + "ffn.1", d, d * cfg.ffn_mult);
            dense(pre + "ffn.2", d * cfg.ffn_mult, d);
        }
    }
    norm("head_norm", d);
    for (int i = 0; i < cfg.mlp_layers; ++i) {
        const bool last = i + 1 == cfg.mlp_layers;
        dense("proj." + std::to_string(i), d, last ? cfg.out_dim : d);
    }
    dense("gene", cfg.out_dim, cfg.genes);
    dense("dev", cfg.out_dim, cfg.genes);
    if (cfg.transcriptomic_dim > 0) dense("tfa", cfg.out_dim, cfg.transcriptomic_dim);
    return p;
}

// ---------------------------------------------------------------------------
// Geometry: everything that depends only on coordinates

/// One attention window: slot -> spot (-1 when empty) plus its rotary table.
struct WindowLayout {
    std::vector<int> slot_spot;
    RotaryTable rotary;
    Mask occupancy;
};

struct BlockLayout {
    std::vector<WindowLayout> windows;
};

struct Geometry {
    LatticeScale scale;
    std::vector<Spot> spots;
    std::vector<std::vector<WindowPartition>> partitions;  // [stage][block], windowed stages only
    std::vector<std::vector<BlockLayout>> layouts;          // [stage][block], all stages
};

namespace detail {

inline WindowLayout make_layout(std::vector<int> slot_spot, RotaryTable table) {
    Mask occ({slot_spot.size()}, false);
    for (std::size_t s = 0; s < slot_spot.size(); ++s) occ.set(s, slot_spot[s] >= 0);
    return {std::move(slot_spot), std::move(table), std::move(occ)};
}

inline BlockLayout layout_from_partition(const WindowPartition& part, const Geometry& geo, const ModelConfig& cfg) {
    BlockLayout out;
    const RopeConfig rope = cfg.rope();
    for (const auto& win : part.windows) {
        const std::size_t slots = win.slot_spot.size();
        RotaryTable table;
        if (cfg.pe == PeKind::hexrope) {
            std::vector<CubeOffset> offs(slots);
            for (std::size_t s = 0; s < slots; ++s) offs[s] = CubeOffset::from_axial(part.slots->offset(s));
            table = RotaryTable::hex(rope, offs);
        } else {
            std::vector<PlanarOffset> offs(slots);
            for (std::size_t s = 0; s < slots; ++s) {
                const int i = win.slot_spot[s];
                if (i < 0) continue;
                const CartesianPoint d = geo.spots[static_cast<std::size_t>(i)].pos - win.center;
                offs[s] = {d.x1 / geo.scale.d_med, d.x2 / geo.scale.d_med};
            }
            table = RotaryTable::planar(rope, offs);
        }
        out.windows.push_back(make_layout(win.slot_spot, std::move(table)));
    }
    return out;
}

// Global stage: every spot in one window, offsets relative to the anchor.
inline BlockLayout global_layout(const Geometry& geo, const ModelConfig& cfg) {
    const std::size_t n = geo.spots.size();
    std::vector<int> slot_spot(n);
    for (std::size_t i = 0; i < n; ++i) slot_spot[i] = static_cast<int>(i);
    const RopeConfig rope = cfg.rope();
    RotaryTable table;
    if (cfg.pe == PeKind::hexrope) {
        std::vector<CubeOffset> offs(n);
        for (std::size_t i = 0; i < n; ++i) offs[i] = CubeOffset::from_axial(geo.spots[i].cell);
        table = RotaryTable::hex(rope, offs);
    } else {
        std::vector<PlanarOffset> offs(n);
        for (std::size_t i = 0; i < n; ++i) {
            const CartesianPoint d = geo.spots[i].pos - geo.scale.anchor;
            offs[i] = {d.x1 / geo.scale.d_med, d.x2 / geo.scale.d_med};
        }
        table = RotaryTable::planar(rope, offs);
    }
    BlockLayout out;
    out.windows.push_back(make_layout(std::move(slot_spot), std::move(table)));
    return out;
}

} // namespace detail

/**
 * Encode coordinates on the lattice and build every (stage, block) partition.
 * A single spot has no neighbour distance; it gets a unit scale.
 */
inline Geometry prepare_geometry(std::span<const CartesianPoint> coords, const ModelConfig& cfg) {
    cfg.validate();
    if (coords.empty()) throw InputError("prepare_geometry: no spots");
    Geometry geo;
    const std::size_t k = static_cast<std::size_t>(cfg.knn_k);
    if (coords.size() > k) {
        geo.scale = estimate_scale(coords, cfg.knn_k);
    } else if (coords.size() > 1) {
        geo.scale = estimate_scale(coords, static_cast<int>(coords.size()) - 1);
    } else {
        geo.scale = {1.0, 1.0 / std::sqrt(3.0), coords[0]};
    }
    geo.spots = encode_spots(coords, geo.scale);

    for (int l = 0; l + 1 < cfg.stages; ++l) {
        std::vector<WindowPartition> parts;
        std::vector<BlockLayout> layouts;
        for (int b = 0; b < cfg.blocks; ++b) {
            const int shift = shift_for_block(b);
            WindowPartition part = cfg.window == WindowKind::hex
                                       ? partition(geo.spots, geo.scale, cfg.radii[static_cast<std::size_t>(l)], shift, cfg.collisions)
                                       : partition_square(geo.spots, geo.scale, cfg.square_side(l), shift, cfg.collisions);
            part.stage = l;
            part.block = b;
            layouts.push_back(detail::layout_from_partition(part, geo, cfg));
            parts.push_back(std::move(part));
        }
        geo.partitions.push_back(std::move(parts));
        geo.layouts.push_back(std::move(layouts));
    }
    std::vector<BlockLayout> global(static_cast<std::size_t>(cfg.blocks), detail::global_layout(geo, cfg));
    geo.layouts.push_back(std::move(global));
    return geo;
}

// ---------------------------------------------------------------------------
// Window attention

struct AttentionCache {
    Tensor input;                // packed normalised tokens, slots x D
    Tensor q, k, v;              // q and k already rotated
    std::vector<Tensor> probs;   // per head, slots x slots
    Tensor concat;               // per-head outputs, slots x D
};

namespace detail {

inline Tensor head_slice(const Tensor& x, std::size_t head, std::size_t hd) {
    Tensor out = Tensor::matrix(x.rows(), hd);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < hd; ++j) out(i, j) = x(i, head * hd + j);
    return out;
}

inline void head_store(Tensor& x, const Tensor& part, std::size_t head, std::size_t hd) {
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < hd; ++j) x(i, head * hd + j) = part(i, j);
}

inline void zero_empty_rows(Tensor& x, const Mask& occ) {
    for (std::size_t i = 0; i < x.rows(); ++i)
        if (!occ[i])
            for (double& v : x.row(i)) v = 0.0;
}

} // namespace detail

/**
 * Multi-head attention over one packed window. Queries and keys are rotated
 * by `rotary`; empty slots are excluded as keys and emit zero rows.
 */
inline Tensor window_attention(const Tensor& packed, const Mask& occupancy, const RotaryTable& rotary,
                               const ParamSet& params, const std::string& prefix, const ModelConfig& cfg,
                               AttentionCache* cache = nullptr) {
    const std::size_t slots = packed.rows();
    const std::size_t heads = static_cast<std::size_t>(cfg.heads);
    const std::size_t hd = static_cast<std::size_t>(cfg.head_dim());
    if (occupancy.size() != slots) throw StructuralError("window_attention: occupancy length mismatch");

    Tensor q = linear(packed, params[prefix + "attn.q.w"], params[prefix + "attn.q.b"]);
    Tensor k = linear(packed, params[prefix + "attn.k.w"], params[prefix + "attn.k.b"]);
    Tensor v = linear(packed, params[prefix + "attn.v.w"], params[prefix + "attn.v.b"]);
    detail::zero_empty_rows(q, occupancy);
    detail::zero_empty_rows(k, occupancy);
    detail::zero_empty_rows(v, occupancy);
    for (std::size_t h = 0; h < heads; ++h) {
        rotary.rotate(q, h * hd);
        rotary.rotate(k, h * hd);
    }

    std::vector<char> pair(slots * slots);
    for (std::size_t i = 0; i < slots; ++i)
        for (std::size_t j = 0; j < slots; ++j) pair[i * slots + j] = occupancy[i] && occupancy[j];
    const Mask valid({slots, slots}, std::move(pair));

    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    Tensor concat = Tensor::matrix(slots, static_cast<std::size_t>(cfg.dim));
    std::vector<Tensor> probs;
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor qh = detail::head_slice(q, h, hd);
        const Tensor kh = detail::head_slice(k, h, hd);
        const Tensor vh = detail::head_slice(v, h, hd);
        const Tensor p = masked_softmax(scale(matmul_a_bt(qh, kh), inv_sqrt), valid, 1);
        detail::head_store(concat, matmul(p, vh), h, hd);
        if (cache) probs.push_back(p);
    }
    Tensor out = linear(concat, params[prefix + "attn.o.w"], params[prefix + "attn.o.b"]);
    detail::zero_empty_rows(out, occupancy);
    if (cache) {
        cache->input = packed;
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->probs = std::move(probs);
        cache->concat = std::move(concat);
    }
    return out;
}

/// Backward of window_attention; accumulates parameter gradients and returns d(packed).
inline Tensor window_attention_backward(const Tensor& d_out_in, const Mask& occupancy, const RotaryTable& rotary,
                                        const AttentionCache& cache, const ParamSet& params, ParamSet& grads,
                                        const std::string& prefix, const ModelConfig& cfg) {
    const std::size_t heads = static_cast<std::size_t>(cfg.heads);
    const std::size_t hd = static_cast<std::size_t>(cfg.head_dim());
    Tensor d_out = d_out_in;
    detail::zero_empty_rows(d_out, occupancy);

    add_inplace(grads[prefix + "attn.o.w"], matmul_at_b(cache.concat, d_out));
    add_inplace(grads[prefix + "attn.o.b"], column_sums(d_out));
    const Tensor d_concat = matmul_a_bt(d_out, params[prefix + "attn.o.w"]);

    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    Tensor dq(cache.q.shape()), dk(cache.k.shape()), dv(cache.v.shape());
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor qh = detail::head_slice(cache.q, h, hd);
        const Tensor kh = detail::head_slice(cache.k, h, hd);
        const Tensor vh = detail::head_slice(cache.v, h, hd);
        const Tensor doh = detail::head_slice(d_concat, h, hd);
        const Tensor& p = cache.probs[h];
        const Tensor dp = matmul_a_bt(doh, vh);
        detail::head_store(dv, matmul_at_b(p, doh), h, hd);
        const Tensor ds = scale(softmax_rows_backward(p, dp), inv_sqrt);
        detail::head_store(dq, matmul(ds, kh), h, hd);
        detail::head_store(dk, matmul_at_b(ds, qh), h, hd);
    }
    for (std::size_t h = 0; h < heads; ++h) {
        rotary.rotate(dq, h * hd, true);
        rotary.rotate(dk, h * hd, true);
    }
    detail::zero_empty_rows(dq, occupancy);
    detail::zero_empty_rows(dk, occupancy);
    detail::zero_empty_rows(dv, occupancy);

    Tensor d_in = Tensor::matrix(cache.input.rows(), cache.input.cols());
    for (const char* name : {"q", "k", "v"}) {
        const Tensor& d = name[0] == 'q' ? dq : (name[0] == 'k' ? dk : dv);
        const std::string base = prefix + "attn." + name;
        add_inplace(grads[base + ".w"], matmul_at_b(cache.input, d));
        add_inplace(grads[base + ".b"], column_sums(d));
        add_inplace(d_in, matmul_a_bt(d, params[base + ".w"]));
    }
    return d_in;
}

/**
 * A full pre-norm block applied to one packed window:
 * x + attn(ln1(x)), then + ffn(ln2(.)). Empty slots come out as zeros.
 */
inline Tensor hexmsa_block(const Tensor& window, const Mask& occupancy, const RotaryTable& rotary,
                           const ParamSet& params, const std::string& prefix, const ModelConfig& cfg) {
    const Tensor y1 = layer_norm(window, params[prefix + "ln1.gain"], params[prefix + "ln1.bias"], cfg.ln_eps);
    Tensor x = add(window, window_attention(y1, occupancy, rotary, params, prefix, cfg));
    const Tensor y2 = layer_norm(x, params[prefix + "ln2.gain"], params[prefix + "ln2.bias"], cfg.ln_eps);
    const Tensor hidden = gelu(linear(y2, params[prefix + "ffn.1.w"], params[prefix + "ffn.1.b"]));
    x = add(x, linear(hidden, params[prefix + "ffn.2.w"], params[prefix + "ffn.2.b"]));
    detail::zero_empty_rows(x, occupancy);
    return x;
}

inline Tensor hexmsa_block(const Tensor& window, const Mask& occupancy, std::span<const CubeOffset> offsets,
                           const ParamSet& params, const std::string& prefix, const ModelConfig& cfg) {
    return hexmsa_block(window, occupancy, RotaryTable::hex(cfg.rope(), offsets), params, prefix, cfg);
}

// ---------------------------------------------------------------------------
// Full network

struct BlockCache {
    Tensor x_in;
    LayerNormCache ln1;
    std::vector<AttentionCache> windows;
    Tensor x_mid;
    LayerNormCache ln2;
    Tensor y2;
    Tensor ffn_pre;
    Tensor ffn_act;
};

struct ForwardCache {
    Tensor tokens;
    std::vector<BlockCache> blocks;  // stage-major
    Tensor h_final;
    LayerNormCache head_norm;
    Tensor head_in;
    std::vector<Tensor> mlp_in;   // input of each projection layer
    std::vector<Tensor> mlp_pre;  // pre-activation of each hidden layer
    Tensor z_centered;
};

struct ForwardOutput {
    Tensor z;          // N x D_out
    Tensor y_hat;      // N x G
    Tensor y_dev_hat;  // N x G
    ForwardCache cache;
};

/// Gradients flowing into the network outputs.
struct OutputGrads {
    Tensor d_y_hat;
    Tensor d_y_dev_hat;
    Tensor d_z;  // extra gradient on Z (feature alignment); may be empty
};

inline ForwardOutput forward(const Tensor& tokens, const Geometry& geo, const ParamSet& params, const ModelConfig& cfg) {
    cfg.validate();
    const std::size_t n = geo.spots.size();
    if (tokens.rows() != n || tokens.cols() != static_cast<std::size_t>(cfg.input_dim)) {
        throw StructuralError("forward: tokens shape " + shape_string(tokens.shape()) + " does not match " +
                              std::to_string(n) + " spots x " + std::to_string(cfg.input_dim));
    }
    if (geo.layouts.size() != static_cast<std::size_t>(cfg.stages)) throw StructuralError("forward: geometry/config stage mismatch");

    ForwardOutput out;
    ForwardCache& c = out.cache;
    c.tokens = tokens;
    Tensor x = linear(tokens, params["embed.w"], params["embed.b"]);

    for (int l = 0; l < cfg.stages; ++l) {
        for (int b = 0; b < cfg.blocks; ++b) {
            const std::string pre = block_prefix(l, b);
            const BlockLayout& layout = geo.layouts[static_cast<std::size_t>(l)][static_cast<std::size_t>(b)];
            BlockCache bc;
            bc.x_in = x;
            const Tensor y1 = layer_norm(x, params[pre + "ln1.gain"], params[pre + "ln1.bias"], cfg.ln_eps, &bc.ln1);

            Tensor attn = Tensor::matrix(n, static_cast<std::size_t>(cfg.dim));
            for (const WindowLayout& win : layout.windows) {
                Tensor packed = Tensor::matrix(win.slot_spot.size(), static_cast<std::size_t>(cfg.dim));
                for (std::size_t s = 0; s < win.slot_spot.size(); ++s) {
                    if (win.slot_spot[s] < 0) continue;
                    const auto src = y1.row(static_cast<std::size_t>(win.slot_spot[s]));
                    std::copy(src.begin(), src.end(), packed.row(s).begin());
                }
                AttentionCache ac;
                const Tensor wout = window_attention(packed, win.occupancy, win.rotary, params, pre, cfg, &ac);
                for (std::size_t s = 0; s < win.slot_spot.size(); ++s) {
                    if (win.slot_spot[s] < 0) continue;
                    const auto src = wout.row(s);
                    std::copy(src.begin(), src.end(), attn.row(static_cast<std::size_t>(win.slot_spot[s])).begin());
                }
                bc.windows.push_back(std::move(ac));
            }
            x = add(x, attn);
            bc.x_mid = x;
            bc.y2 = layer_norm(x, params[pre + "ln2.gain"], params[pre + "ln2.bias"], cfg.ln_eps, &bc.ln2);
            bc.ffn_pre = linear(bc.y2, params[pre + "ffn.1.w"], params[pre + "ffn.1.b"]);
            bc.ffn_act = gelu(bc.ffn_pre);
            x = add(x, linear(bc.ffn_act, params[pre + "ffn.2.w"], params[pre + "ffn.2.b"]));
            c.blocks.push_back(std::move(bc));
        }
    }

    c.h_final = x;
    Tensor h = layer_norm(x, params["head_norm.gain"], params["head_norm.bias"], cfg.ln_eps, &c.head_norm);
    for (int i = 0; i < cfg.mlp_layers; ++i) {
        const std::string name = "proj." + std::to_string(i);
        c.mlp_in.push_back(h);
        h = linear(h, params[name + ".w"], params[name + ".b"]);
        if (i + 1 < cfg.mlp_layers) {
            c.mlp_pre.push_back(h);
            h = gelu(h);
        }
    }
    out.z = h;
    out.y_hat = linear(out.z, params["gene.w"], params["gene.b"]);
    c.z_centered = center_columns(out.z);
    out.y_dev_hat = linear(c.z_centered, params["dev.w"], params["dev.b"]);
    return out;
}

/// Reverse pass through the cached forward computation.
inline ParamSet backward(const ForwardOutput& fwd, const OutputGrads& up, const Geometry& geo, const ParamSet& params,
                         const ModelConfig& cfg) {
    const ForwardCache& c = fwd.cache;
    ParamSet g = params.zeros_like();

    add_inplace(g["gene.w"], matmul_at_b(fwd.z, up.d_y_hat));
    add_inplace(g["gene.b"], column_sums(up.d_y_hat));
    Tensor dz = matmul_a_bt(up.d_y_hat, params["gene.w"]);
    if (!up.d_z.empty()) add_inplace(dz, up.d_z);

    add_inplace(g["dev.w"], matmul_at_b(c.z_centered, up.d_y_dev_hat));
    add_inplace(g["dev.b"], column_sums(up.d_y_dev_hat));
    add_inplace(dz, center_columns(matmul_a_bt(up.d_y_dev_hat, params["dev.w"])));

    Tensor dh = dz;
    for (int i = cfg.mlp_layers - 1; i >= 0; --i) {
        const std::string name = "proj." + std::to_string(i);
        if (i + 1 < cfg.mlp_layers) {
            const Tensor& pre = c.mlp_pre[static_cast<std::size_t>(i)];
            for (std::size_t k = 0; k < dh.size(); ++k) dh[k] *= gelu_derivative(pre[k]);
        }
        const Tensor& in = c.mlp_in[static_cast<std::size_t>(i)];
        add_inplace(g[name + ".w"], matmul_at_b(in, dh));
        add_inplace(g[name + ".b"], column_sums(dh));
        dh = matmul_a_bt(dh, params[name + ".w"]);
    }
    auto hn = layer_norm_backward(dh, c.head_norm, params["head_norm.gain"]);
    add_inplace(g["head_norm.gain"], hn.d_gain);
    add_inplace(g["head_norm.bias"], hn.d_bias);
    Tensor dx = std::move(hn.d_x);

    const std::size_t n = geo.spots.size();
    for (int l = cfg.stages - 1; l >= 0; --l) {
        for (int b = cfg.blocks - 1; b >= 0; --b) {
            const std::string pre = block_prefix(l, b);
            const BlockCache& bc = c.blocks[static_cast<std::size_t>(l * cfg.blocks + b)];
            const BlockLayout& layout = geo.layouts[static_cast<std::size_t>(l)][static_cast<std::size_t>(b)];

            // FFN branch
            add_inplace(g[pre + "ffn.2.w"], matmul_at_b(bc.ffn_act, dx));
            add_inplace(g[pre + "ffn.2.b"], column_sums(dx));
            Tensor dpre = matmul_a_bt(dx, params[pre + "ffn.2.w"]);
            for (std::size_t k = 0; k < dpre.size(); ++k) dpre[k] *= gelu_derivative(bc.ffn_pre[k]);
            add_inplace(g[pre + "ffn.1.w"], matmul_at_b(bc.y2, dpre));
            add_inplace(g[pre + "ffn.1.b"], column_sums(dpre));
            auto ln2 = layer_norm_backward(matmul_a_bt(dpre, params[pre + "ffn.1.w"]), bc.ln2, params[pre + "ln2.gain"]);
            add_inplace(g[pre + "ln2.gain"], ln2.d_gain);
            add_inplace(g[pre + "ln2.bias"], ln2.d_bias);
            add_inplace(dx, ln2.d_x);

            // attention branch
            Tensor dy1 = Tensor::matrix(n, static_cast<std::size_t>(cfg.dim));
            for (std::size_t w = 0; w < layout.windows.size(); ++w) {
                const WindowLayout& win = layout.windows[w];
                Tensor dpacked = Tensor::matrix(win.slot_spot.size(), static_cast<std::size_t>(cfg.dim));
                for (std::size_t s = 0; s < win.slot_spot.size(); ++s) {
                    if (win.slot_spot[s] < 0) continue;
                    const auto src = dx.row(static_cast<std::size_t>(win.slot_spot[s]));
                    std::copy(src.begin(), src.end(), dpacked.row(s).begin());
                }
                const Tensor din = window_attention_backward(dpacked, win.occupancy, win.rotary, bc.windows[w], params, g, pre, cfg);
                for (std::size_t s = 0; s < win.slot_spot.size(); ++s) {
                    if (win.slot_spot[s] < 0) continue;
                    auto dst = dy1.row(static_cast<std::size_t>(win.slot_spot[s]));
                    const auto src = din.row(s);
                    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
                }
            }
            auto ln1 = layer_norm_backward(dy1, bc.ln1, params[pre + "ln1.gain"]);
            add_inplace(g[pre + "ln1.gain"], ln1.d_gain);
            add_inplace(g[pre + "ln1.bias"], ln1.d_bias);
            add_inplace(dx, ln1.d_x);
        }
    }
    add_inplace(g["embed.w"], matmul_at_b(c.tokens, dx));
    add_inplace(g["embed.b"], column_sums(dx));
    return g;
}

} // namespace hexst
