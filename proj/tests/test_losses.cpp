#include "hexst/losses.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace hexst;

namespace {

Tensor mat(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor({r, c}, std::move(v)); }

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor t = Tensor::matrix(r, c);
    for (double& v : t.values()) v = n(rng);
    return t;
}

LinearProjection identity_projection(std::size_t d) {
    LinearProjection p{Tensor::matrix(d, d), Tensor({d})};
    for (std::size_t i = 0; i < d; ++i) p.weight(i, i) = 1.0;
    return p;
}

Tensor negate(Tensor t) {
    for (double& v : t.values()) v = -v;
    return t;
}

} // namespace

TEST(LossMse, Examples) {
    std::mt19937_64 rng(1);
    const Tensor y = random_matrix(4, 3, rng);
    EXPECT_EQ(loss_mse(y, y).value, 0.0);
    EXPECT_EQ(loss_mse(mat(1, 1, {2}), mat(1, 1, {0})).value, 4.0);
    EXPECT_DOUBLE_EQ(loss_mse(mat(2, 2, {1, 0, 0, 1}), Tensor({2, 2})).value, 0.5);
    EXPECT_THROW(loss_mse(Tensor({2, 2}), Tensor({2, 3})), StructuralError);
}

TEST(LossPearson, Examples) {
    const Tensor y = mat(4, 2, {1, 3, 2, -1, 5, 0, 7, 2});
    EXPECT_NEAR(loss_pearson(y, y).value, 0.0, 1e-14);
    EXPECT_NEAR(loss_pearson(negate(y), y).value, 2.0, 1e-14);
    // Gene 0 perfectly correlated, gene 1 constant in the truth.
    const Tensor truth = mat(3, 2, {1, 4, 2, 4, 3, 4});
    const Tensor pred = mat(3, 2, {10, 1, 20, 2, 30, 0});
    EXPECT_NEAR(loss_pearson(pred, truth).value, 0.5, 1e-14);
    EXPECT_THROW(loss_pearson(mat(1, 1, {1}), mat(1, 1, {1})), InputError);
}

TEST(LossPearson, InvariantToPositiveAffinePredictions) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> a(0.1, 5.0), b(-10.0, 10.0);
    for (int t = 0; t < 20; ++t) {
        const Tensor y = random_matrix(9, 4, rng), p = random_matrix(9, 4, rng);
        Tensor q = p;
        for (std::size_t j = 0; j < 4; ++j) {
            const double sa = a(rng), sb = b(rng);
            for (std::size_t i = 0; i < 9; ++i) q(i, j) = sa * p(i, j) + sb;
        }
        EXPECT_NEAR(loss_pearson(p, y).value, loss_pearson(q, y).value, 1e-12);
    }
}

TEST(LossTfa, Examples) {
    std::mt19937_64 rng(5);
    const Tensor t = random_matrix(5, 3, rng);
    const auto id = identity_projection(3);
    EXPECT_NEAR(loss_tfa(t, t, id).value, 0.0, 1e-14);
    EXPECT_NEAR(loss_tfa(negate(t), t, id).value, 2.0, 1e-14);
    const Tensor a = mat(2, 2, {1, 0, 0, 3}), b = mat(2, 2, {0, 2, -1, 0});
    EXPECT_NEAR(loss_tfa(a, b, identity_projection(2)).value, 1.0, 1e-15);
}

TEST(LossDev, Examples) {
    EXPECT_NEAR(loss_dev(mat(2, 1, {-1, 1}), mat(2, 1, {0, 2})).value, 0.0, 1e-15);
    std::mt19937_64 rng(7);
    const Tensor y = random_matrix(6, 3, rng);
    EXPECT_NEAR(loss_dev(standardized_deviations(y, 1e-8), y).value, 0.0, 1e-14);
    // Scaling the predicted deviations does not matter: both sides are standardised.
    Tensor scaled = center_columns(y);
    for (double& v : scaled.values()) v *= 7.5;
    EXPECT_NEAR(loss_dev(scaled, y).value, 0.0, 1e-14);
}

TEST(LossDev, ConstantTruthColumnScoresPredictedSpread) {
    const Tensor y = mat(3, 1, {2, 2, 2});
    const Tensor p = mat(3, 1, {1, -2, 1});
    const double eps = 1e-8;
    const double sd = std::sqrt((1.0 + 4.0 + 1.0) / 3.0);
    const double expect = (1.0 + 4.0 + 1.0) / 3.0 / ((sd + eps) * (sd + eps));
    EXPECT_NEAR(loss_dev(p, y, eps).value, expect, 1e-12);
}

TEST(LossTotal, Examples) {
    const LossWeights w;
    EXPECT_EQ(loss_total(0, 0, 0, 0, w).total, 0.0);
    EXPECT_NEAR(loss_total(1, 1, 1, 1, w).total, 1.201, 1e-15);
    EXPECT_EQ(loss_total(3, 5, 7, 11, LossWeights{0, 0, 0, 0}).total, 0.0);
    const LossWeights off = effective_weights(w, LossToggles{true, false, true, false});
    EXPECT_EQ(off.pearson, 0.0);
    EXPECT_EQ(off.dev, 0.0);
    EXPECT_EQ(off.mse, w.mse);
}

TEST(LossGradients, MatchFiniteDifferences) {
    std::mt19937_64 rng(11);
    for (int seed = 0; seed < 5; ++seed) {
        const Tensor y = random_matrix(6, 3, rng), p = random_matrix(6, 3, rng);
        const Tensor mse_fd = finite_diff_grad([&](const Tensor& x) { return loss_mse(x, y).value; }, p, 1e-5);
        EXPECT_LT(max_relative_error(loss_mse(p, y).grad.values(), mse_fd.values()), 1e-6);
        const Tensor pcc_fd = finite_diff_grad([&](const Tensor& x) { return loss_pearson(x, y).value; }, p, 1e-5);
        EXPECT_LT(max_relative_error(loss_pearson(p, y).grad.values(), pcc_fd.values()), 1e-4);
        const Tensor dev_fd = finite_diff_grad([&](const Tensor& x) { return loss_dev(x, y).value; }, p, 1e-5);
        EXPECT_LT(max_relative_error(loss_dev(p, y).grad.values(), dev_fd.values()), 1e-4);

        const Tensor z = random_matrix(6, 4, rng), t = random_matrix(6, 3, rng);
        LinearProjection proj{random_matrix(4, 3, rng), Tensor::vector({0.1, -0.2, 0.3})};
        const TfaLoss g = loss_tfa(z, t, proj);
        const Tensor dz = finite_diff_grad([&](const Tensor& x) { return loss_tfa(x, t, proj).value; }, z, 1e-5);
        const Tensor dw = finite_diff_grad(
            [&](const Tensor& x) { return loss_tfa(z, t, LinearProjection{x, proj.bias}).value; }, proj.weight, 1e-5);
        const Tensor db = finite_diff_grad(
            [&](const Tensor& x) { return loss_tfa(z, t, LinearProjection{proj.weight, x}).value; }, proj.bias, 1e-5);
        EXPECT_LT(max_relative_error(g.d_z.values(), dz.values()), 1e-4);
        EXPECT_LT(max_relative_error(g.d_weight.values(), dw.values()), 1e-4);
        EXPECT_LT(max_relative_error(g.d_bias.values(), db.values()), 1e-4);
    }
}

TEST(LossPearson, ConstantPredictionColumnHasZeroGradient) {
    std::mt19937_64 rng(13);
    const Tensor y = random_matrix(5, 2, rng);
    Tensor p = random_matrix(5, 2, rng);
    for (std::size_t i = 0; i < 5; ++i) p(i, 1) = 3.0;
    const LossValue l = loss_pearson(p, y);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(l.grad(i, 1), 0.0);
}
