#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttp/backbone.hpp"
#include "ttp/image.hpp"
#include "ttp/params.hpp"
#include "ttp/tensor.hpp"

namespace ttp {

struct HeadConfig {
    std::size_t in_channels = 32;
    std::size_t d_head = 8;
    /// Channels of the upsampled levels; 0 selects in_channels / 4.
    std::size_t up_channels = 0;
    bool multilevel = true;

    std::size_t resolved_up_channels() const;
};

struct TransposedConv {
    Tensor kernel;  // (c_in, c_out, 2, 2)
    Tensor bias;    // (c_out)

    Tensor forward(const Tensor& x) const;
};

/// Multi-level change head. Levels, in order: x4 up, x2 up, identity, x2 down.
/// With `multilevel` off only the identity level exists.
struct HeadParams {
    HeadConfig cfg;
    Linear fuse;                      // 2c -> c, per pixel
    TransposedConv up4a;              // c -> u
    TransposedConv up4b;              // u -> u
    TransposedConv up2;               // c -> u
    std::vector<Linear> level_proj;   // level channels -> d_head, then GELU
    Linear final_proj;                // levels * d_head -> 1

    std::size_t num_levels() const { return level_proj.size(); }
    void collect(ParamSet& out, const std::string& prefix, bool trainable) const;
};

HeadParams head_init(const HeadConfig& cfg, std::uint64_t seed);

/// [up4(F), up2(F), F, down2(F)], or [F] without multilevel.
std::vector<Tensor> build_pyramid(const Tensor& fused, const HeadParams& p);

/// Change logits (b, 1, 4h, 4w) from the two temporal feature maps (b, c, h, w).
Tensor head_forward(const Tensor& x0, const Tensor& x1, const HeadParams& p);

/// Bilinear upsampling to height x width, sigmoid, threshold (ties count as change).
std::vector<Mask> logits_to_fullres_mask(const Tensor& logits, std::size_t height, std::size_t width,
                                         double threshold = 0.5);

}  // namespace ttp
