#include "hexst/trainer.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace hexst;

namespace {

TrainConfig short_run(int steps) {
    TrainConfig t;
    t.steps = steps;
    t.eval_every = steps;
    t.seed = 3;
    return t;
}

} // namespace

TEST(Optimizer, ZeroLearningRateKeepsParameters) {
    const ModelConfig cfg = toy_model_config();
    const SpotDataset ds = toy_dataset(1);
    for (OptimizerKind k : {OptimizerKind::sgd, OptimizerKind::adam}) {
        TrainConfig t = short_run(3);
        t.lr = 0.0;
        t.optimizer = k;
        const TrainResult r = train(ds, cfg, t);
        EXPECT_TRUE(r.params == init_params(cfg, t.seed));
    }
}

TEST(Optimizer, SgdStepIsParameterMinusScaledGradient) {
    const ModelConfig cfg = toy_model_config();
    const SpotDataset ds = toy_dataset(2);
    TrainConfig t = short_run(1);
    t.optimizer = OptimizerKind::sgd;
    t.lr = 0.05;
    const ParamSet p0 = init_params(cfg, t.seed);
    const ParamSet g = objective(ds, prepare_geometry(ds.coords, cfg), p0, cfg, t, true).grads;
    const TrainResult r = train(ds, cfg, t);
    for (std::size_t i = 0; i < p0.size(); ++i)
        for (std::size_t k = 0; k < p0.at(i).size(); ++k)
            ASSERT_EQ(r.params.at(i)[k], p0.at(i)[k] - 0.05 * g.at(i)[k]) << p0.name(i);
}

TEST(Optimizer, FirstAdamStepMovesEachCoordinateByLearningRate) {
    TrainConfig t;
    t.lr = 0.01;
    ParamSet p;
    p.add("w", Tensor::vector({1.0, -2.0, 0.5}));
    ParamSet g;
    g.add("w", Tensor::vector({3.0, -0.2, 0.0}));
    Optimizer opt(t, p);
    opt.step(p, g);
    EXPECT_NEAR(p["w"][0], 1.0 - 0.01, 1e-9);
    EXPECT_NEAR(p["w"][1], -2.0 + 0.01, 1e-9);
    EXPECT_EQ(p["w"][2], 0.5);
}

TEST(Train, DeterministicLogsAndParameters) {
    const ModelConfig cfg = toy_model_config();
    const SpotDataset ds = toy_dataset(3);
    std::ostringstream a, b;
    const TrainResult ra = train(ds, cfg, short_run(5), nullptr, &a);
    const TrainResult rb = train(ds, cfg, short_run(5), nullptr, &b);
    EXPECT_EQ(a.str(), b.str());
    EXPECT_TRUE(ra.params == rb.params);
    EXPECT_FALSE(a.str().empty());
}

TEST(Train, ToggleOffMatchesZeroWeight) {
    const ModelConfig cfg = toy_model_config();
    const SpotDataset ds = toy_dataset(4);
    TrainConfig off = short_run(4);
    off.toggles.dev = false;
    off.toggles.tfa = false;
    TrainConfig zero = short_run(4);
    zero.weights.dev = 0.0;
    zero.weights.tfa = 0.0;
    EXPECT_TRUE(train(ds, cfg, off).params == train(ds, cfg, zero).params);
}

TEST(Train, BestTotalIsRunningMinimum) {
    const ModelConfig cfg = toy_model_config();
    const SpotDataset ds = toy_dataset(5);
    const TrainResult r = train(ds, cfg, short_run(20));
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : r.steps) best = std::min(best, s.loss.total);
    EXPECT_EQ(r.best_total, best);
    EXPECT_EQ(r.steps[static_cast<std::size_t>(r.best_step)].loss.total, best);
    for (std::size_t i = 1; i < r.checkpoints.size(); ++i)
        EXPECT_LT(r.checkpoints[i].loss.total, r.checkpoints[i - 1].loss.total);
    EXPECT_LT(r.best_total, r.steps.front().loss.total);
}

TEST(Train, NonFiniteLossIsNumericError) {
    const ModelConfig cfg = toy_model_config();
    const SpotDataset ds = toy_dataset(6);
    ParamSet p = init_params(cfg, 1);
    p["gene.w"][0] = std::numeric_limits<double>::quiet_NaN();
    try {
        train(ds, cfg, short_run(2), nullptr, nullptr, {}, p);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("gene.w"), std::string::npos);
    }
}

TEST(Train, InvalidConfigIsInputError) {
    const ModelConfig cfg = toy_model_config();
    const SpotDataset ds = toy_dataset(6);
    TrainConfig t = short_run(1);
    t.steps = 0;
    EXPECT_THROW(train(ds, cfg, t), InputError);
    t = short_run(1);
    t.weights.mse = -1.0;
    EXPECT_THROW(train(ds, cfg, t), InputError);
}

TEST(Train, LogLineFormat) {
    StepRecord s{7, loss_total(0.5, 0.25, 0.0, 1.0, LossWeights{1, 1, 1, 1})};
    EXPECT_EQ(format_step_line(s),
              "{\"kind\":\"step\",\"step\":7,\"mse\":0.5,\"pearson\":0.25,\"tfa\":0,\"dev\":1,\"total\":1.75}");
}

TEST(GradCheck, ToyModelPasses) {
    const ModelConfig cfg = toy_model_config();
    const SpotDataset ds = toy_dataset(7);
    const GradCheckReport r = grad_check(ds, cfg, TrainConfig{}, init_params(cfg, 7));
    EXPECT_TRUE(r.passed()) << r.worst_group << " " << r.max_rel_error;
    EXPECT_FALSE(r.groups.empty());
}

TEST(GradCheck, DetectsCorruptedGradient) {
    const ModelConfig cfg = toy_model_config();
    const SpotDataset ds = toy_dataset(8);
    const GradCheckReport r = grad_check(ds, cfg, TrainConfig{}, init_params(cfg, 8), 1e-3,
                                         [](ParamSet& g) { g["stage1.block0.attn.k.w"][3] *= 1.01; });
    EXPECT_FALSE(r.passed());
    EXPECT_EQ(r.worst_group, "stage1.block0.attn.k.w");
}

TEST(GradCheck, ZeroWeightsGiveZeroGradient) {
    const ModelConfig cfg = toy_model_config();
    const SpotDataset ds = toy_dataset(9);
    TrainConfig t;
    t.weights = LossWeights{0, 0, 0, 0};
    const ParamSet g = objective(ds, prepare_geometry(ds.coords, cfg), init_params(cfg, 9), cfg, t, true).grads;
    for (std::size_t i = 0; i < g.size(); ++i)
        for (double v : g.at(i).values()) ASSERT_EQ(v, 0.0) << g.name(i);
    const GradCheckReport r = grad_check(ds, cfg, t, init_params(cfg, 9));
    EXPECT_TRUE(r.passed());
}

TEST(GradCheck, RefusesLargeModels) {
    ModelConfig cfg = toy_model_config();
    cfg.dim = 64;
    cfg.heads = 4;
    const SpotDataset ds = toy_dataset(1);
    EXPECT_THROW(grad_check(ds, cfg, TrainConfig{}, init_params(cfg, 1)), InputError);
}
