#pragma once

#include <cstdint>
#include <string>

#include "ttp/params.hpp"
#include "ttp/tensor.hpp"

namespace ttp {

/// Bitemporal exchange gate placed after a global attention block.
///
///   M  = sigmoid(proj1(cat(X0, X1)))
///   Y0 = X0 + proj2(M * X1)
///   Y1 = X1 + proj2(M * X0)
///
/// Both lines read the original X0 and X1. proj1 compresses 2c -> c channels;
/// proj2 is a single c -> c map shared by both lines. Projections act per pixel.
struct GateParams {
    Tensor proj1_weight;  // (c, 2c)
    Tensor proj1_bias;    // (c)
    Tensor proj2_weight;  // (c, c)
    Tensor proj2_bias;    // (c)
    std::size_t layer_index = 0;

    std::size_t channels() const { return proj2_weight.shape()[0]; }
    void collect(ParamSet& out, const std::string& prefix, bool trainable) const;
};

/// proj1 ~ N(0, 1/(2c)); proj2 starts at zero so a fresh gate is the identity.
/// A positive `proj2_std` draws proj2 from N(0, proj2_std^2) instead.
GateParams gate_init(std::size_t channels, std::uint64_t seed, std::size_t layer_index = 0, double proj2_std = 0.0);

struct GateOutput {
    Tensor y0;
    Tensor y1;
    Tensor mask;
};

GateOutput gate_forward(const GateParams& g, const Tensor& x0, const Tensor& x1);

}  // namespace ttp
