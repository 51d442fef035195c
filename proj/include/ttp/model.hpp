#pragma once

#include <cstdint>
#include <vector>

#include "ttp/backbone.hpp"
#include "ttp/gate.hpp"
#include "ttp/head.hpp"
#include "ttp/params.hpp"

namespace ttp {

struct AblationFlags {
    bool use_ttg = true;
    bool use_multilevel = true;
    bool use_lora = true;

    bool operator==(const AblationFlags&) const = default;
};

struct ModelConfig {
    BackboneConfig backbone;
    std::size_t d_head = 8;
    std::size_t up_channels = 0;
    /// 0 keeps the exchange projection zero at init.
    double gate_proj2_std = 0.0;
    AblationFlags flags;
    std::uint64_t seed = 0;
};

/// Features captured at each gate tap, per temporal stream.
struct ForwardTrace {
    std::vector<Tensor> stream0;
    std::vector<Tensor> stream1;
    std::vector<Tensor> masks;
};

/// Siamese change detector: one shared encoder over both images, exchange
/// gates after every global block, multi-level head on the final maps.
///
/// Tensors are shared handles, so copies of a model alias its parameters.
class TtpModel {
public:
    explicit TtpModel(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }

    /// Logits at (b, 1, 4h, 4w), h = w = image_size / patch_size.
    Tensor forward_logits(const Tensor& img0, const Tensor& img1, ForwardTrace* trace = nullptr) const;
    /// Change probabilities (sigmoid of the logits).
    Tensor forward(const Tensor& img0, const Tensor& img1, ForwardTrace* trace = nullptr) const;

    std::size_t output_size() const { return 4 * cfg_.backbone.grid(); }

    /// Every tensor, tagged trainable or frozen.
    ParamSet parameters() const;
    ParamSet trainable_parameters() const { return parameters().filter(true); }
    ParamSet frozen_parameters() const { return parameters().filter(false); }

    Encoder& backbone() { return backbone_; }
    const Encoder& backbone() const { return backbone_; }
    std::vector<GateParams>& gates() { return gates_; }
    const std::vector<GateParams>& gates() const { return gates_; }
    HeadParams& head() { return head_; }
    const HeadParams& head() const { return head_; }

private:
    ModelConfig cfg_;
    Encoder backbone_;
    std::vector<GateParams> gates_;
    HeadParams head_;
};

}  // namespace ttp
