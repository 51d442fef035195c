#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <set>

#include "ttp/backbone.hpp"
#include "ttp/gradcheck.hpp"
#include "ttp/ops.hpp"
#include "ttp/rng.hpp"

using namespace ttp;

namespace {

BackboneConfig small_config() {
    BackboneConfig c;
    c.image_size = 32;
    c.patch_size = 8;
    c.embed_dim = 16;
    c.depth = 4;
    c.num_heads = 2;
    c.window_size = 2;
    c.global_layers = {2, 4};
    c.lora_rank = 2;
    return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

void fill_normal(Tensor& t, Rng& rng, double std) {
    for (auto& v : t.mutable_data()) v = rng.normal(0, std);
}

}  // namespace

TEST(BackboneConfig, ToyAndFullScaleValidate) {
    EXPECT_NO_THROW(BackboneConfig::toy().validate());
    const auto full = BackboneConfig::full_scale();
    EXPECT_NO_THROW(full.validate());
    EXPECT_EQ(full.grid(), 32u);
    EXPECT_EQ(full.lora_rank, 16u);
    EXPECT_EQ(full.global_layers.size(), 4u);
}

TEST(BackboneConfig, RejectsBadValues) {
    auto c = small_config();
    c.image_size = 30;
    EXPECT_THROW(c.validate(), ConfigError);
    c = small_config();
    c.global_layers = {5};
    EXPECT_THROW(c.validate(), ConfigError);
    c = small_config();
    c.global_layers = {3, 2};
    EXPECT_THROW(c.validate(), ConfigError);
    c = small_config();
    c.window_size = 3;
    EXPECT_THROW(c.validate(), ConfigError);
    c = small_config();
    c.lora_rank = 9;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Lora, ForwardEqualsEffectiveWeight) {
    Encoder enc(small_config(), 1);
    LoraLinear& l = *enc.adapters()[0];
    Rng rng(2);
    fill_normal(l.wb, rng, 0.3);
    const Tensor x = randn({3, 5, 16}, rng);
    const Tensor got = l.forward(x);
    const Tensor want = linear(x, l.effective_weight(), l.bias);
    EXPECT_LT(max_abs_diff(got, want), 1e-13);
}

TEST(Lora, ZeroUpdateIsBitExactWithFrozenPath) {
    Encoder enc(small_config(), 1);
    LoraLinear& l = *enc.adapters()[1];
    Rng rng(3);
    const Tensor x = randn({2, 4, 16}, rng);
    const Tensor with = l.forward(x);
    l.enabled = false;
    const Tensor without = l.forward(x);
    EXPECT_EQ(max_abs_diff(with, without), 0.0);
}

TEST(Lora, DeltaRankBoundedByR) {
    Encoder enc(small_config(), 7);
    Rng rng(4);
    for (auto* l : enc.adapters()) {
        fill_normal(l->wa, rng, 1.0);
        fill_normal(l->wb, rng, 1.0);
        const Tensor d = l->delta_weight();
        Eigen::MatrixXd m(16, 16);
        for (std::size_t i = 0; i < 16; ++i) {
            for (std::size_t j = 0; j < 16; ++j) m(i, j) = d.data()[i * 16 + j];
        }
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
        const auto s = svd.singularValues();
        int rank = 0;
        for (int i = 0; i < s.size(); ++i) rank += s(i) > 1e-8 * s(0);
        EXPECT_EQ(rank, 2);
    }
}

TEST(Attention, FullWindowEqualsGlobal) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Encoder enc(small_config(), seed);
        AttentionLayer layer = enc.layers()[0];
        Rng rng(seed + 10);
        fill_normal(layer.q_proj.wb, rng, 0.5);
        const Tensor x = randn({2, 16, 16}, rng);
        layer.window = std::nullopt;
        const Tensor global = layer.forward(x, 4, 4);
        layer.window = 4;
        const Tensor windowed = layer.forward(x, 4, 4);
        EXPECT_LT(max_abs_diff(global, windowed), 1e-10);
    }
}

TEST(Attention, WindowsDoNotMix) {
    Encoder enc(small_config(), 3);
    const AttentionLayer& layer = enc.layers()[0];  // window 2 on a 4x4 grid
    ASSERT_TRUE(layer.window.has_value());
    Rng rng(5);
    const Tensor x = randn({1, 16, 16}, rng);
    std::vector<double> moved(x.data().begin(), x.data().end());
    // Token (3,3) sits in the bottom-right window only.
    for (std::size_t c = 0; c < 16; ++c) moved[15 * 16 + c] += 1.0;
    const Tensor y0 = layer.attend(x, 4, 4);
    const Tensor y1 = layer.attend(Tensor::from(x.shape(), moved), 4, 4);
    for (std::size_t t = 0; t < 16; ++t) {
        const std::size_t r = t / 4, c = t % 4;
        const bool same_window = r >= 2 && c >= 2;
        double diff = 0;
        for (std::size_t k = 0; k < 16; ++k) diff += std::abs(y0.data()[t * 16 + k] - y1.data()[t * 16 + k]);
        if (same_window) {
            EXPECT_GT(diff, 0.0) << "token " << t;
        } else {
            EXPECT_EQ(diff, 0.0) << "token " << t;
        }
    }
}

TEST(Encoder, ShapesAndTaps) {
    Encoder enc(small_config(), 1);
    Rng rng(1);
    const Tensor img = rand_uniform({2, 3, 32, 32}, rng, 0, 1);
    std::vector<std::size_t> layers;
    const auto out = enc.forward(img, [&](const Tensor& m, std::size_t tap, std::size_t layer) {
        EXPECT_EQ(m.shape(), (Shape{2, 16, 4, 4}));
        EXPECT_EQ(tap, layers.size());
        layers.push_back(layer);
        return m;
    });
    EXPECT_EQ(layers, (std::vector<std::size_t>{2, 4}));
    EXPECT_EQ(out.features.shape(), (Shape{2, 16, 4, 4}));
    EXPECT_EQ(out.taps.size(), 2u);
    EXPECT_THROW(enc.forward(rand_uniform({1, 3, 24, 24}, rng, 0, 1)), DimensionError);
}

TEST(Encoder, InitialAdaptersMatchFrozenEncoder) {
    Encoder enc(small_config(), 9);
    Rng rng(2);
    const Tensor img = rand_uniform({1, 3, 32, 32}, rng, 0, 1);
    const Tensor a = enc.forward(img).features;
    enc.set_lora_enabled(false);
    const Tensor b = enc.forward(img).features;
    EXPECT_EQ(max_abs_diff(a, b), 0.0);
}

TEST(Encoder, InitDoesNotDependOnConstructionOrder) {
    auto c = small_config();
    Encoder a(c, 5);
    c.depth = 6;
    c.global_layers = {2, 4, 6};
    Encoder b(c, 5);
    ParamSet pa, pb;
    a.collect(pa, "backbone.", true);
    b.collect(pb, "backbone.", true);
    for (const auto& e : pa.entries()) {
        const NamedParam* other = pb.find(e.name);
        ASSERT_NE(other, nullptr) << e.name;
        EXPECT_EQ(max_abs_diff(e.tensor, other->tensor), 0.0) << e.name;
    }
}

TEST(Encoder, OnlyAdaptersAreTrainable) {
    Encoder enc(small_config(), 1);
    ParamSet ps;
    enc.collect(ps, "backbone.", true);
    std::set<std::string> names;
    for (const auto& e : ps.entries()) {
        EXPECT_TRUE(names.insert(e.name).second) << "duplicate " << e.name;
        const bool adapter = e.name.find(".lora_a") != std::string::npos || e.name.find(".lora_b") != std::string::npos;
        EXPECT_EQ(e.trainable, adapter) << e.name;
    }
    EXPECT_EQ(ps.filter(true).count(), 4u * 3u * 2u * 16u * 2u);
}

TEST(Encoder, TokenMapRoundTrip) {
    Rng rng(3);
    const Tensor t = randn({2, 12, 5}, rng);
    const Tensor m = tokens_to_map(t, 3, 4);
    EXPECT_EQ(m.shape(), (Shape{2, 5, 3, 4}));
    EXPECT_EQ(max_abs_diff(map_to_tokens(m), t), 0.0);
    EXPECT_EQ(m.at({1, 2, 2, 3}), t.at({1, 11, 2}));
}

TEST(Encoder, AdapterGradientsMatchFiniteDifferences) {
    auto c = small_config();
    c.embed_dim = 8;
    c.depth = 2;
    c.global_layers = {2};
    Encoder enc(c, 3);
    Rng rng(4);
    for (auto* l : enc.adapters()) {
        fill_normal(l->wa, rng, 0.5);
        fill_normal(l->wb, rng, 0.5);
    }
    const Tensor img = rand_uniform({1, 3, 32, 32}, rng, 0, 1);
    const Tensor w = randn({1, 8, 4, 4}, rng);
    auto loss = [&] { return sum(mul(enc.forward(img).features, w)); };
    for (auto* l : enc.adapters()) {
        l->wa.set_requires_grad(true);
        l->wb.set_requires_grad(true);
    }
    loss().backward();
    for (auto* l : enc.adapters()) {
        for (Tensor* p : {&l->wa, &l->wb}) {
            const auto fd = finite_diff_param_grad([&] { NoGradGuard g; return loss().item(); }, *p, 1e-4);
            EXPECT_LT(relative_error(p->grad(), fd), 1e-6);
        }
    }
}
