#include <gtest/gtest.h>

#include "ttp/gradcheck.hpp"
#include "ttp/model.hpp"
#include "ttp/ops.hpp"
#include "ttp/optim.hpp"
#include "ttp/rng.hpp"

using namespace ttp;

namespace {

ModelConfig tiny(AblationFlags flags = {}) {
    ModelConfig c;
    c.backbone.image_size = 32;
    c.backbone.embed_dim = 16;
    c.backbone.depth = 2;
    c.backbone.num_heads = 2;
    c.backbone.window_size = 2;
    c.backbone.global_layers = {2};
    c.backbone.lora_rank = 2;
    c.flags = flags;
    c.seed = 4;
    return c;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Model, ToyParameterBudget) {
    const TtpModel m(ModelConfig{});
    const auto all = m.parameters();
    const auto trainable = m.trainable_parameters();
    EXPECT_EQ(trainable.count(), 23801u);
    EXPECT_EQ(m.frozen_parameters().count(), 109920u);
    EXPECT_EQ(all.count(), trainable.count() + m.frozen_parameters().count());
    EXPECT_EQ(m.output_size(), 32u);
}

TEST(Model, TrainableSetFollowsFlags) {
    for (const AblationFlags f : {AblationFlags{true, true, true}, AblationFlags{false, true, true},
                                  AblationFlags{false, false, true}, AblationFlags{false, false, false}}) {
        const TtpModel m(tiny(f));
        const ParamSet params = m.parameters();
        for (const auto& e : params.entries()) {
            bool want = false;
            if (e.name.starts_with("head.") || e.name.starts_with("gates.")) want = true;
            if (e.name.find(".lora_") != std::string::npos) want = f.use_lora;
            EXPECT_EQ(e.trainable, want) << e.name;
            EXPECT_EQ(e.tensor.requires_grad(), want) << e.name;
            if (!f.use_ttg) {
                EXPECT_FALSE(e.name.starts_with("gates.")) << e.name;
            }
        }
    }
}

TEST(Model, VariantsAgreeAtInit) {
    Rng rng(3);
    const Tensor a = rand_uniform({2, 3, 32, 32}, rng, 0, 1);
    const Tensor b = rand_uniform({2, 3, 32, 32}, rng, 0, 1);
    NoGradGuard ng;
    // Gates start as the identity and adapters as a zero update.
    const auto full = values(TtpModel(tiny({true, true, true})).forward_logits(a, b));
    const auto no_gate = values(TtpModel(tiny({false, true, true})).forward_logits(a, b));
    EXPECT_EQ(full, no_gate);
    const auto single = values(TtpModel(tiny({false, false, true})).forward_logits(a, b));
    const auto frozen = values(TtpModel(tiny({false, false, false})).forward_logits(a, b));
    EXPECT_EQ(single, frozen);
}

TEST(Model, OutputShapeAndRange) {
    const TtpModel m(tiny());
    Rng rng(1);
    const Tensor a = rand_uniform({3, 3, 32, 32}, rng, 0, 1);
    const Tensor p = m.forward(a, a);
    EXPECT_EQ(p.shape(), (Shape{3, 1, 16, 16}));
    for (double v : p.data()) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
    EXPECT_THROW(m.forward(a, rand_uniform({3, 3, 16, 16}, rng, 0, 1)), DimensionError);
}

TEST(Model, TraceRecordsEveryGate) {
    auto cfg = tiny();
    cfg.backbone.depth = 4;
    cfg.backbone.global_layers = {1, 3, 4};
    const TtpModel m(cfg);
    Rng rng(2);
    const Tensor a = rand_uniform({1, 3, 32, 32}, rng, 0, 1);
    ForwardTrace trace;
    m.forward_logits(a, a, &trace);
    EXPECT_EQ(trace.masks.size(), 3u);
    EXPECT_EQ(trace.stream0.size(), 3u);
    EXPECT_EQ(m.gates().size(), 3u);
    EXPECT_EQ(m.gates()[1].layer_index, 3u);
}

TEST(Model, FrozenWeightsUntouchedByTraining) {
    const TtpModel m(tiny());
    std::vector<std::vector<double>> before;
    const ParamSet frozen_before = m.frozen_parameters();
    for (const auto& e : frozen_before.entries()) before.push_back(values(e.tensor));
    AdamW opt(m.trainable_parameters());
    Rng rng(5);
    const Tensor a = rand_uniform({2, 3, 32, 32}, rng, 0, 1);
    const Tensor b = rand_uniform({2, 3, 32, 32}, rng, 0, 1);
    const Tensor y = Tensor::from({2, 1, 16, 16}, std::vector<double>(512, 1.0));
    const auto trainable_before = values(m.trainable_parameters().entries().back().tensor);
    for (int step = 0; step < 10; ++step) {
        opt.zero_grad();
        bce_loss(m.forward(a, b), y).backward();
        opt.step(1e-3);
    }
    const auto frozen = m.frozen_parameters();
    for (std::size_t i = 0; i < frozen.size(); ++i) {
        EXPECT_EQ(values(frozen.entries()[i].tensor), before[i]) << frozen.entries()[i].name;
        EXPECT_FALSE(frozen.entries()[i].tensor.has_grad()) << frozen.entries()[i].name;
    }
    EXPECT_NE(values(m.trainable_parameters().entries().back().tensor), trainable_before);
}

TEST(Model, SameSeedSameWeights) {
    const TtpModel a(tiny());
    const TtpModel b(tiny());
    auto cfg = tiny();
    cfg.seed = 5;
    const TtpModel c(cfg);
    const auto pa = a.parameters();
    const auto pb = b.parameters();
    const auto pc = c.parameters();
    bool any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        EXPECT_EQ(values(pa.entries()[i].tensor), values(pb.entries()[i].tensor));
        any_diff |= values(pa.entries()[i].tensor) != values(pc.entries()[i].tensor);
    }
    EXPECT_TRUE(any_diff);
}

TEST(Model, EndToEndGradientsMatchFiniteDifferences) {
    ModelConfig c;
    c.backbone.image_size = 16;
    c.backbone.patch_size = 8;
    c.backbone.embed_dim = 8;
    c.backbone.depth = 2;
    c.backbone.num_heads = 2;
    c.backbone.window_size = 1;
    c.backbone.global_layers = {1};
    c.backbone.lora_rank = 2;
    c.d_head = 2;
    c.gate_proj2_std = 0.3;
    c.seed = 8;
    const TtpModel m(c);
    Rng rng(9);
    // Move everything off its special init so every path carries gradient.
    ParamSet trainable = m.trainable_parameters();
    for (auto& e : trainable.entries()) {
        for (auto& v : e.tensor.mutable_data()) v += rng.normal(0, 0.2);
    }
    const Tensor a = rand_uniform({1, 3, 16, 16}, rng, 0, 1);
    const Tensor b = rand_uniform({1, 3, 16, 16}, rng, 0, 1);
    const Tensor y = Tensor::from({1, 1, 8, 8}, [&] {
        std::vector<double> v(64);
        for (auto& x : v) x = rng.bernoulli(0.5) ? 1.0 : 0.0;
        return v;
    }());
    auto loss = [&] { return bce_loss(m.forward(a, b), y); };
    loss().backward();
    for (auto& e : trainable.entries()) {
        const auto fd = finite_diff_param_grad([&] { NoGradGuard ng; return loss().item(); }, e.tensor, 1e-4);
        EXPECT_LT(relative_error(e.tensor.grad(), fd), 1e-6) << e.name;
    }
}
