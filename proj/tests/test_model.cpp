#include "hexst/checkpoint.hpp"
#include "hexst/model.hpp"
#include "hexst/synth.hpp"
#include "hexst/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

using namespace hexst;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.stages = 2;
    c.blocks = 2;
    c.input_dim = 6;
    c.dim = 12;
    c.heads = 2;
    c.radii = {1};
    c.out_dim = 5;
    c.genes = 3;
    c.transcriptomic_dim = 0;
    c.ffn_mult = 2;
    return c;
}

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double sd = 1.0) {
    std::normal_distribution<double> n(0.0, sd);
    Tensor t = Tensor::matrix(r, c);
    for (double& v : t.values()) v = n(rng);
    return t;
}

std::vector<CubeOffset> slot_offsets(int radius) {
    std::vector<CubeOffset> out;
    for (const HexCoord& o : build_slot_set(radius).offsets()) out.push_back(CubeOffset::from_axial(o));
    return out;
}

// x W + b for a single row, written out.
std::vector<double> affine_row(std::span<const double> x, const Tensor& w, const Tensor& b) {
    std::vector<double> out(w.cols());
    for (std::size_t j = 0; j < w.cols(); ++j) {
        out[j] = b[j];
        for (std::size_t k = 0; k < x.size(); ++k) out[j] += x[k] * w(k, j);
    }
    return out;
}

// Reference multi-head attention with explicit loops over occupied slots.
Tensor naive_attention(const Tensor& x, const std::vector<bool>& occ, const std::vector<CubeOffset>& offs,
                       const ParamSet& p, const std::string& pre, const ModelConfig& cfg) {
    const std::size_t n = x.rows(), d = static_cast<std::size_t>(cfg.dim), hd = static_cast<std::size_t>(cfg.head_dim());
    Tensor q = Tensor::matrix(n, d), k = Tensor::matrix(n, d), v = Tensor::matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto qi = affine_row(x.row(i), p[pre + "attn.q.w"], p[pre + "attn.q.b"]);
        const auto ki = affine_row(x.row(i), p[pre + "attn.k.w"], p[pre + "attn.k.b"]);
        const auto vi = affine_row(x.row(i), p[pre + "attn.v.w"], p[pre + "attn.v.b"]);
        for (std::size_t j = 0; j < d; ++j) q(i, j) = qi[j], k(i, j) = ki[j], v(i, j) = vi[j];
    }
    const RopeConfig rope = cfg.rope();
    Tensor out = Tensor::matrix(n, d);
    for (std::size_t h = 0; h < static_cast<std::size_t>(cfg.heads); ++h) {
        Tensor qh = Tensor::matrix(n, hd), kh = Tensor::matrix(n, hd);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < hd; ++j) qh(i, j) = q(i, h * hd + j), kh(i, j) = k(i, h * hd + j);
        qh = apply_hexrope(qh, offs, rope);
        kh = apply_hexrope(kh, offs, rope);
        for (std::size_t i = 0; i < n; ++i) {
            if (!occ[i]) continue;
            std::vector<double> w(n, 0.0);
            double mx = -1e300, z = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (!occ[j]) continue;
                double s = 0.0;
                for (std::size_t c = 0; c < hd; ++c) s += qh(i, c) * kh(j, c);
                w[j] = s / std::sqrt(static_cast<double>(hd));
                mx = std::max(mx, w[j]);
            }
            for (std::size_t j = 0; j < n; ++j)
                if (occ[j]) z += (w[j] = std::exp(w[j] - mx));
            for (std::size_t j = 0; j < n; ++j)
                if (occ[j])
                    for (std::size_t c = 0; c < hd; ++c) out(i, h * hd + c) += w[j] / z * v(j, h * hd + c);
        }
    }
    Tensor res = Tensor::matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        if (!occ[i]) continue;
        const auto r = affine_row(out.row(i), p[pre + "attn.o.w"], p[pre + "attn.o.b"]);
        for (std::size_t j = 0; j < d; ++j) res(i, j) = r[j];
    }
    return res;
}

Mask mask_of(const std::vector<bool>& occ) {
    Mask m({occ.size()}, false);
    for (std::size_t i = 0; i < occ.size(); ++i) m.set(i, occ[i]);
    return m;
}

void expect_near_all(const Tensor& a, const Tensor& b, double tol) {
    ASSERT_EQ(a.shape(), b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], tol) << "at " << i;
}

SpotDataset small_dataset(std::uint64_t seed, int radius = 3) {
    SynthConfig s;
    s.radius = radius;
    s.jitter = 0.05;
    s.genes = {GenePatternKind::boundary, GenePatternKind::gradient, GenePatternKind::sparse};
    s.token_dim = 6;
    s.transcriptomic_dim = 0;
    s.seed = seed;
    return generate(s);
}

} // namespace

TEST(ModelConfig, ValidationAndRopeSplit) {
    ModelConfig c = small_config();
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.head_dim(), 6);
    EXPECT_EQ(c.rope().axis_channels, 2);
    c.heads = 5;
    EXPECT_THROW(c.validate(), StructuralError);
    c = small_config();
    c.radii = {1, 2};
    EXPECT_THROW(c.validate(), StructuralError);
}

TEST(InitParams, NamesShapesAndDeterminism) {
    const ModelConfig c = small_config();
    const ParamSet a = init_params(c, 3), b = init_params(c, 3), other = init_params(c, 4);
    EXPECT_TRUE(a == b);
    EXPECT_FALSE(a == other);
    EXPECT_EQ(a["embed.w"].shape(), (Shape{6, 12}));
    EXPECT_EQ(a["stage1.block1.ffn.1.w"].shape(), (Shape{12, 24}));
    EXPECT_EQ(a["proj.1.w"].shape(), (Shape{12, 5}));
    EXPECT_EQ(a["gene.w"].shape(), (Shape{5, 3}));
    EXPECT_FALSE(a.contains("tfa.w"));
    for (double v : a["stage0.block0.ln1.gain"].values()) EXPECT_EQ(v, 1.0);
    const double bound = 1.0 / std::sqrt(12.0);
    for (double v : a["stage0.block0.attn.q.w"].values()) EXPECT_LE(std::abs(v), bound);
    EXPECT_THROW((void)a["nope"], StructuralError);
}

TEST(WindowAttention, MatchesReferenceLoops) {
    std::mt19937_64 rng(1);
    const ModelConfig cfg = small_config();
    const ParamSet p = init_params(cfg, 11);
    const auto offs = slot_offsets(1);
    for (int t = 0; t < 10; ++t) {
        std::vector<bool> occ(7);
        for (std::size_t s = 0; s < 7; ++s) occ[s] = rng() % 3 != 0;
        occ[rng() % 7] = true;
        Tensor x = random_matrix(7, 12, rng);
        for (std::size_t s = 0; s < 7; ++s)
            if (!occ[s])
                for (double& v : x.row(s)) v = 0.0;
        const Tensor got = window_attention(x, mask_of(occ), RotaryTable::hex(cfg.rope(), offs), p, "stage0.block0.", cfg);
        expect_near_all(got, naive_attention(x, occ, offs, p, "stage0.block0.", cfg), 1e-12);
    }
}

TEST(WindowAttention, SingleOccupiedSlotReturnsItsValueProjection) {
    std::mt19937_64 rng(2);
    const ModelConfig cfg = small_config();
    const ParamSet p = init_params(cfg, 5);
    const std::string pre = "stage0.block1.";
    std::vector<bool> occ(7, false);
    occ[4] = true;
    const Tensor x = random_matrix(7, 12, rng);
    const Tensor got = window_attention(x, mask_of(occ), RotaryTable::hex(cfg.rope(), slot_offsets(1)), p, pre, cfg);
    const auto v = affine_row(x.row(4), p[pre + "attn.v.w"], p[pre + "attn.v.b"]);
    const auto expect = affine_row(v, p[pre + "attn.o.w"], p[pre + "attn.o.b"]);
    for (std::size_t j = 0; j < 12; ++j) EXPECT_NEAR(got(4, j), expect[j], 1e-13);
    for (std::size_t s = 0; s < 7; ++s)
        if (s != 4)
            for (double val : got.row(s)) EXPECT_EQ(val, 0.0);
}

TEST(WindowAttention, IdenticalKeysAverageTheValues) {
    std::mt19937_64 rng(3);
    const ModelConfig cfg = small_config();
    ParamSet p = init_params(cfg, 6);
    const std::string pre = "stage0.block0.";
    // Keys ignore the input, so both slots present the same key.
    for (double& v : p[pre + "attn.k.w"].values()) v = 0.0;
    const Tensor x = random_matrix(2, 12, rng);
    const std::vector<CubeOffset> zero(2);
    const Tensor got = window_attention(x, Mask({2}, true), RotaryTable::hex(cfg.rope(), zero), p, pre, cfg);
    const auto v0 = affine_row(x.row(0), p[pre + "attn.v.w"], p[pre + "attn.v.b"]);
    const auto v1 = affine_row(x.row(1), p[pre + "attn.v.w"], p[pre + "attn.v.b"]);
    std::vector<double> mean(12);
    for (std::size_t j = 0; j < 12; ++j) mean[j] = 0.5 * (v0[j] + v1[j]);
    const auto expect = affine_row(mean, p[pre + "attn.o.w"], p[pre + "attn.o.b"]);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 12; ++j) EXPECT_NEAR(got(i, j), expect[j], 1e-13);
}

TEST(WindowAttention, EmptySlotContentsAreIgnored) {
    std::mt19937_64 rng(4);
    const ModelConfig cfg = small_config();
    const ParamSet p = init_params(cfg, 7);
    std::vector<bool> occ{true, false, true, true, false, false, true};
    const RotaryTable rot = RotaryTable::hex(cfg.rope(), slot_offsets(1));
    Tensor x = random_matrix(7, 12, rng);
    const Tensor a = window_attention(x, mask_of(occ), rot, p, "stage1.block0.", cfg);
    for (std::size_t s : {1u, 4u, 5u})
        for (double& v : x.row(s)) v = 1e30;
    const Tensor b = window_attention(x, mask_of(occ), rot, p, "stage1.block0.", cfg);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
    const Tensor blk_a = hexmsa_block(x, mask_of(occ), slot_offsets(1), p, "stage1.block0.", cfg);
    for (std::size_t s : {1u, 4u, 5u})
        for (double& v : x.row(s)) v = -3.0;
    const Tensor blk_b = hexmsa_block(x, mask_of(occ), slot_offsets(1), p, "stage1.block0.", cfg);
    for (std::size_t i = 0; i < blk_a.size(); ++i) EXPECT_EQ(blk_a[i], blk_b[i]);
}

TEST(WindowAttention, PermutingSlotsPermutesOutputs) {
    std::mt19937_64 rng(5);
    const ModelConfig cfg = small_config();
    const ParamSet p = init_params(cfg, 8);
    const auto offs = slot_offsets(2);
    const std::size_t n = offs.size();
    std::vector<bool> occ(n);
    for (std::size_t s = 0; s < n; ++s) occ[s] = rng() % 2;
    occ[0] = true;
    const Tensor x = random_matrix(n, 12, rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor xp = Tensor::matrix(n, 12);
    std::vector<bool> occp(n);
    std::vector<CubeOffset> offp(n);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t j = 0; j < 12; ++j) xp(s, j) = x(perm[s], j);
        occp[s] = occ[perm[s]];
        offp[s] = offs[perm[s]];
    }
    const Tensor a = hexmsa_block(x, mask_of(occ), offs, p, "stage0.block0.", cfg);
    const Tensor b = hexmsa_block(xp, mask_of(occp), offp, p, "stage0.block0.", cfg);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t j = 0; j < 12; ++j) EXPECT_NEAR(b(s, j), a(perm[s], j), 1e-12);
}

TEST(WindowAttention, BackwardMatchesFiniteDifferences) {
    std::mt19937_64 rng(6);
    const ModelConfig cfg = small_config();
    const ParamSet p = init_params(cfg, 9);
    const std::string pre = "stage0.block0.";
    std::vector<bool> occ{true, true, false, true, true, false, true};
    const Mask m = mask_of(occ);
    const RotaryTable rot = RotaryTable::hex(cfg.rope(), slot_offsets(1));
    const Tensor x = random_matrix(7, 12, rng), w = random_matrix(7, 12, rng);
    auto f = [&](const Tensor& in, const ParamSet& ps) {
        const Tensor y = window_attention(in, m, rot, ps, pre, cfg);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
        return s;
    };
    AttentionCache cache;
    window_attention(x, m, rot, p, pre, cfg, &cache);
    ParamSet grads = p.zeros_like();
    const Tensor dx = window_attention_backward(w, m, rot, cache, p, grads, pre, cfg);
    const Tensor ndx = finite_diff_grad([&](const Tensor& t) { return f(t, p); }, x, 1e-5);
    EXPECT_LT(max_relative_error(dx.values(), ndx.values(), 1e-5), 1e-5);
    for (const char* name : {"attn.q.w", "attn.k.b", "attn.v.w", "attn.o.w"}) {
        ParamSet work = p;
        const Tensor nd = finite_diff_grad(
            [&](const Tensor& t) {
                work[pre + name] = t;
                return f(x, work);
            },
            p[pre + name], 1e-5);
        EXPECT_LT(max_relative_error(grads[pre + name].values(), nd.values(), 1e-5), 1e-5) << name;
    }
}

TEST(Forward, SingleSpotIsFinite) {
    const ModelConfig cfg = small_config();
    const std::vector<CartesianPoint> coords{{3.0, 4.0}};
    const Geometry geo = prepare_geometry(coords, cfg);
    std::mt19937_64 rng(7);
    const ForwardOutput out = forward(random_matrix(1, 6, rng), geo, init_params(cfg, 1), cfg);
    EXPECT_EQ(out.y_hat.shape(), (Shape{1, 3}));
    EXPECT_TRUE(out.y_hat.all_finite());
    EXPECT_TRUE(out.y_dev_hat.all_finite());
}

TEST(Forward, ZeroGeneHeadGivesZeroPredictions) {
    const ModelConfig cfg = small_config();
    const SpotDataset ds = small_dataset(1);
    ParamSet p = init_params(cfg, 2);
    for (double& v : p["gene.w"].values()) v = 0.0;
    for (double& v : p["gene.b"].values()) v = 0.0;
    const Tensor y = forward(ds.tokens, prepare_geometry(ds.coords, cfg), p, cfg).y_hat;
    for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, ShapeMismatchIsStructural) {
    const ModelConfig cfg = small_config();
    const SpotDataset ds = small_dataset(1);
    const Geometry geo = prepare_geometry(ds.coords, cfg);
    EXPECT_THROW(forward(Tensor::matrix(ds.size(), 5), geo, init_params(cfg, 1), cfg), StructuralError);
    ModelConfig three = cfg;
    three.stages = 3;
    three.radii = {1, 2};
    EXPECT_THROW(forward(ds.tokens, geo, init_params(three, 1), three), StructuralError);
}

TEST(Forward, SpotOrderIsEquivariantWithAnchorFixed) {
    const ModelConfig cfg = small_config();
    const SpotDataset ds = small_dataset(2, 4);
    const ParamSet p = init_params(cfg, 3);
    const Tensor y = forward(ds.tokens, prepare_geometry(ds.coords, cfg), p, cfg).y_hat;
    std::vector<std::size_t> perm(ds.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(9);
    std::shuffle(perm.begin() + 1, perm.end(), rng);
    std::vector<CartesianPoint> coords;
    Tensor tokens = Tensor::matrix(ds.size(), 6);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        coords.push_back(ds.coords[perm[i]]);
        for (std::size_t j = 0; j < 6; ++j) tokens(i, j) = ds.tokens(perm[i], j);
    }
    const Tensor yp = forward(tokens, prepare_geometry(coords, cfg), p, cfg).y_hat;
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t g = 0; g < 3; ++g) EXPECT_NEAR(yp(i, g), y(perm[i], g), 1e-10);
}

TEST(Forward, LatticeTranslationLeavesPredictionsUnchanged) {
    const ModelConfig cfg = small_config();
    const SpotDataset ds = small_dataset(3, 4);
    const ParamSet p = init_params(cfg, 4);
    const Geometry geo = prepare_geometry(ds.coords, cfg);
    const Tensor y = forward(ds.tokens, geo, p, cfg).y_hat;
    const CartesianPoint e1{geo.scale.d_med, 0.0};
    std::vector<CartesianPoint> moved;
    for (const auto& c : ds.coords) moved.push_back(c + e1);
    const Tensor ym = forward(ds.tokens, prepare_geometry(moved, cfg), p, cfg).y_hat;
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(ym[i], y[i], 1e-9);
}

TEST(Forward, TranslationInvarianceOnAnExactLattice) {
    SynthConfig s;
    s.radius = 5;
    s.genes = {GenePatternKind::boundary, GenePatternKind::gradient, GenePatternKind::sparse};
    s.token_dim = 6;
    s.transcriptomic_dim = 0;
    const SpotDataset ds = generate(s);
    for (WindowKind w : {WindowKind::hex, WindowKind::square})
        for (PeKind pe : {PeKind::hexrope, PeKind::rope2d}) {
            ModelConfig cfg = small_config();
            cfg.stages = 3;
            cfg.radii = {1, 2};
            cfg.window = w;
            cfg.pe = pe;
            const ParamSet p = init_params(cfg, 5);
            const Geometry geo = prepare_geometry(ds.coords, cfg);
            const Tensor y = forward(ds.tokens, geo, p, cfg).y_hat;
            for (int k : cfg.radii) {
                const CartesianPoint e1 = center_basis(geo.scale, k).e1;
                std::vector<CartesianPoint> moved;
                for (const auto& c : ds.coords) moved.push_back(c + e1);
                const Tensor ym = forward(ds.tokens, prepare_geometry(moved, cfg), p, cfg).y_hat;
                for (std::size_t i = 0; i < y.size(); ++i) ASSERT_NEAR(ym[i], y[i], 1e-9);
            }
        }
}

TEST(Forward, AblationVariantsRun) {
    const SpotDataset ds = small_dataset(4, 4);
    for (WindowKind w : {WindowKind::hex, WindowKind::square})
        for (PeKind pe : {PeKind::hexrope, PeKind::rope2d}) {
            ModelConfig cfg = small_config();
            cfg.window = w;
            cfg.pe = pe;
            const Geometry geo = prepare_geometry(ds.coords, cfg);
            for (const auto& stage : geo.partitions)
                for (const auto& part : stage) EXPECT_EQ(verify_partition(part, geo.spots), "");
            const ForwardOutput out = forward(ds.tokens, geo, init_params(cfg, 1), cfg);
            EXPECT_TRUE(out.y_hat.all_finite());
        }
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
    const ModelConfig cfg = small_config();
    const SpotDataset ds = small_dataset(5);
    const ParamSet p = init_params(cfg, 5);
    const Geometry geo = prepare_geometry(ds.coords, cfg);
    const ForwardOutput fwd = forward(ds.tokens, geo, p, cfg);
    const ParamSet g = backward(fwd, {Tensor(fwd.y_hat.shape()), Tensor(fwd.y_dev_hat.shape()), Tensor()}, geo, p, cfg);
    for (std::size_t i = 0; i < g.size(); ++i)
        for (double v : g.at(i).values()) ASSERT_EQ(v, 0.0) << g.name(i);
}

TEST(Backward, LinearInUpstreamGradient) {
    std::mt19937_64 rng(6);
    const ModelConfig cfg = small_config();
    const SpotDataset ds = small_dataset(6);
    const ParamSet p = init_params(cfg, 6);
    const Geometry geo = prepare_geometry(ds.coords, cfg);
    const ForwardOutput fwd = forward(ds.tokens, geo, p, cfg);
    const Tensor a = random_matrix(ds.size(), 3, rng), b = random_matrix(ds.size(), 3, rng);
    const Tensor zero(fwd.y_dev_hat.shape());
    const ParamSet ga = backward(fwd, {a, zero, Tensor()}, geo, p, cfg);
    const ParamSet gb = backward(fwd, {b, zero, Tensor()}, geo, p, cfg);
    const ParamSet gab = backward(fwd, {add(scale(a, 2.0), b), zero, Tensor()}, geo, p, cfg);
    for (std::size_t i = 0; i < ga.size(); ++i)
        for (std::size_t k = 0; k < ga.at(i).size(); ++k)
            ASSERT_NEAR(gab.at(i)[k], 2.0 * ga.at(i)[k] + gb.at(i)[k], 1e-10 * (1.0 + std::abs(gab.at(i)[k])));
}

TEST(Backward, MatchesFiniteDifferencesOnSampledCoordinates) {
    std::mt19937_64 rng(7);
    ModelConfig cfg = small_config();
    cfg.transcriptomic_dim = 0;
    const SpotDataset ds = small_dataset(7);
    const ParamSet p = init_params(cfg, 7);
    const Geometry geo = prepare_geometry(ds.coords, cfg);
    const Tensor wy = random_matrix(ds.size(), 3, rng), wd = random_matrix(ds.size(), 3, rng);
    auto f = [&](const ParamSet& ps) {
        const ForwardOutput o = forward(ds.tokens, geo, ps, cfg);
        double s = 0.0;
        for (std::size_t i = 0; i < wy.size(); ++i) s += o.y_hat[i] * wy[i] + o.y_dev_hat[i] * wd[i];
        return s;
    };
    const ForwardOutput fwd = forward(ds.tokens, geo, p, cfg);
    const ParamSet g = backward(fwd, {wy, wd, Tensor()}, geo, p, cfg);
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (int trial = 0; trial < 3; ++trial) {
            const std::size_t k = rng() % p.at(i).size();
            ParamSet work = p;
            auto at = [&](double delta) {
                work.at(i)[k] = p.at(i)[k] + delta;
                return f(work);
            };
            const double h = 1e-4;
            const double num = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
            const double ana = g.at(i)[k];
            worst = std::max(worst, std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6}));
        }
    }
    EXPECT_LT(worst, 1e-5);
}

TEST(Checkpoint, ByteStableRoundTrip) {
    ModelConfig cfg = small_config();
    cfg.window = WindowKind::square;
    cfg.square_sides = {2};
    const ParamSet p = init_params(cfg, 12);
    std::ostringstream a;
    write_checkpoint(a, cfg, p);
    std::istringstream in(a.str());
    const Checkpoint ck = read_checkpoint(in);
    EXPECT_TRUE(ck.params == p);
    EXPECT_EQ(ck.config.window, WindowKind::square);
    EXPECT_EQ(ck.config.square_sides, cfg.square_sides);
    std::ostringstream b;
    write_checkpoint(b, ck.config, ck.params);
    EXPECT_EQ(a.str(), b.str());
}

TEST(Checkpoint, CorruptInputsAreRejected) {
    const ModelConfig cfg = small_config();
    std::ostringstream os;
    write_checkpoint(os, cfg, init_params(cfg, 1));
    const std::string good = os.str();

    std::string bad = good;
    bad[0] = 'X';
    std::istringstream i1(bad);
    EXPECT_THROW(read_checkpoint(i1), InputError);

    std::istringstream i2(good.substr(0, good.size() - 9));
    EXPECT_THROW(read_checkpoint(i2), InputError);

    ModelConfig other = cfg;
    other.genes = 4;
    std::ostringstream mixed;
    write_checkpoint(mixed, other, init_params(cfg, 1));
    std::istringstream i3(mixed.str());
    EXPECT_THROW(read_checkpoint(i3), ConsistencyError);
}
