#include "ttp/gate.hpp"

#include <cmath>

#include "ttp/ops.hpp"
#include "ttp/rng.hpp"

namespace ttp {

namespace {

// Simultaneous update: both residual lines see the pre-update features.
std::pair<Tensor, Tensor> exchange(const GateParams& g, const Tensor& mask, const Tensor& x0, const Tensor& x1) {
    Tensor y0 = add(x0, channel_linear(mul(mask, x1), g.proj2_weight, g.proj2_bias));
    Tensor y1 = add(x1, channel_linear(mul(mask, x0), g.proj2_weight, g.proj2_bias));
    return {y0, y1};
}

}  // namespace

void GateParams::collect(ParamSet& out, const std::string& prefix, bool trainable) const {
    out.add(prefix + "proj1.weight", proj1_weight, trainable);
    out.add(prefix + "proj1.bias", proj1_bias, trainable);
    out.add(prefix + "proj2.weight", proj2_weight, trainable);
    out.add(prefix + "proj2.bias", proj2_bias, trainable);
}

GateParams gate_init(std::size_t channels, std::uint64_t seed, std::size_t layer_index, double proj2_std) {
    if (channels == 0) throw DimensionError("gate needs at least one channel");
    GateParams g;
    Rng rng(derive_seed(seed, "gate.proj1"));
    g.proj1_weight = randn({channels, 2 * channels}, rng, 1.0 / std::sqrt(2.0 * static_cast<double>(channels)));
    g.proj1_bias = Tensor::zeros({channels});
    if (proj2_std > 0.0) {
        Rng rng2(derive_seed(seed, "gate.proj2"));
        g.proj2_weight = randn({channels, channels}, rng2, proj2_std);
    } else {
        g.proj2_weight = Tensor::zeros({channels, channels});
    }
    g.proj2_bias = Tensor::zeros({channels});
    g.layer_index = layer_index;
    return g;
}

GateOutput gate_forward(const GateParams& g, const Tensor& x0, const Tensor& x1) {
    if (x0.shape() != x1.shape()) {
        throw DimensionError("gate inputs differ in shape: " + to_string(x0.shape()) + " vs " + to_string(x1.shape()));
    }
    if (x0.dim() != 4 || x0.shape()[1] != g.channels()) {
        throw DimensionError("gate expects (b," + std::to_string(g.channels()) + ",h,w), got " + to_string(x0.shape()));
    }
    Tensor mask = sigmoid(channel_linear(concat({x0, x1}, 1), g.proj1_weight, g.proj1_bias));
    auto [y0, y1] = exchange(g, mask, x0, x1);
    return {y0, y1, mask};
}

}  // namespace ttp
