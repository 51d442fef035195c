#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ttp/ops.hpp"
#include "ttp/optim.hpp"

using namespace ttp;

namespace {

ParamSet single(double value) {
    ParamSet ps;
    ps.add("p", Tensor::from({1}, {value}, true), true);
    return ps;
}

}  // namespace

TEST(AdamW, DecayOnlyWhenGradientIsZero) {
    auto ps = single(1.0);
    AdamW opt(ps, {0.9, 0.999, 1e-8, 0.01});
    const std::vector<double> g{0.0};
    accumulate_grad(ps.entries()[0].tensor, g);
    opt.step(0.1);
    EXPECT_DOUBLE_EQ(ps.entries()[0].tensor.item(), 0.999);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
    for (double g : {1.0, -3.0, 1e-3}) {
        auto ps = single(1.0);
        AdamW opt(ps, {0.9, 0.999, 1e-8, 0.0});
        accumulate_grad(ps.entries()[0].tensor, std::vector<double>{g});
        opt.step(0.1);
        const double expected = 1.0 - 0.1 * std::copysign(1.0, g) * std::abs(g) / (std::abs(g) + 1e-8);
        EXPECT_NEAR(ps.entries()[0].tensor.item(), expected, 1e-15);
        EXPECT_NEAR(ps.entries()[0].tensor.item(), 1.0 - std::copysign(0.1, g), 1e-6);
    }
}

TEST(AdamW, TwoStepHandComputation) {
    auto ps = single(0.5);
    AdamW opt(ps, {0.9, 0.999, 1e-8, 0.1});
    Tensor& p = ps.entries()[0].tensor;
    double x = 0.5, m = 0, v = 0;
    const double grads[] = {2.0, -1.0};
    for (int t = 1; t <= 2; ++t) {
        opt.zero_grad();
        accumulate_grad(p, std::vector<double>{grads[t - 1]});
        opt.step(0.05);
        x -= 0.05 * 0.1 * x;
        m = 0.9 * m + 0.1 * grads[t - 1];
        v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
        x -= 0.05 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
        EXPECT_DOUBLE_EQ(p.item(), x);
    }
    EXPECT_EQ(opt.steps(), 2u);
}

TEST(AdamW, RequiresGradients) {
    auto ps = single(1.0);
    AdamW opt(ps);
    EXPECT_THROW(opt.step(0.1), std::logic_error);
}

TEST(AdamW, MinimisesQuadratic) {
    ParamSet ps;
    Tensor x = Tensor::from({3}, {2.0, -1.0, 0.5}, true);
    ps.add("x", x, true);
    AdamW opt(ps, {0.9, 0.999, 1e-8, 0.0});
    for (int i = 0; i < 500; ++i) {
        opt.zero_grad();
        sum(mul(x, x)).backward();
        opt.step(0.05);
    }
    for (double v : x.data()) EXPECT_LT(std::abs(v), 1e-2);
}

TEST(Schedule, StandardEndpoints) {
    const auto s = WarmupCosine::standard(1001, 4e-4);
    EXPECT_EQ(s.warmup_steps, 50u);
    EXPECT_DOUBLE_EQ(s.min_lr, 4e-6);
    EXPECT_DOUBLE_EQ(s.lr_at(0), 4e-4 / 50);
    EXPECT_DOUBLE_EQ(s.lr_at(49), 4e-4);
    EXPECT_DOUBLE_EQ(s.lr_at(50), 4e-4);
    const double mid = 4e-6 + 0.5 * (4e-4 - 4e-6) * (1 + std::cos(std::numbers::pi * 0.5));
    EXPECT_DOUBLE_EQ(s.lr_at(50 + 475), mid);
    EXPECT_DOUBLE_EQ(s.lr_at(1000), 4e-6);
    EXPECT_THROW(s.lr_at(1001), std::out_of_range);
}

TEST(Schedule, ShortRunsStillReachMinimum) {
    for (std::size_t total : {1u, 2u, 20u, 300u}) {
        const auto s = WarmupCosine::standard(total, 1e-3);
        EXPECT_DOUBLE_EQ(s.lr_at(total - 1), total == 1 ? 1e-3 : 1e-5) << total;
    }
}

TEST(Schedule, MonotoneAfterWarmup) {
    const auto s = WarmupCosine::standard(300, 1e-3);
    for (std::size_t i = 0; i + 1 < s.warmup_steps; ++i) EXPECT_LT(s.lr_at(i), s.lr_at(i + 1));
    for (std::size_t i = s.warmup_steps; i + 1 < 300; ++i) EXPECT_GE(s.lr_at(i), s.lr_at(i + 1));
}

TEST(Schedule, NoWarmupStartsAtBase) {
    WarmupCosine s;
    s.base_lr = 1.0;
    s.min_lr = 0.0;
    s.total_steps = 5;
    EXPECT_DOUBLE_EQ(s.lr_at(0), 1.0);
    EXPECT_DOUBLE_EQ(s.lr_at(2), 0.5);
    EXPECT_DOUBLE_EQ(s.lr_at(4), 0.0);
    EXPECT_THROW(WarmupCosine::standard(0), std::invalid_argument);
    s.warmup_steps = 5;
    EXPECT_THROW(s.lr_at(0), std::invalid_argument);
}
