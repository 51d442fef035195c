#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttp/params.hpp"
#include "ttp/tensor.hpp"

namespace ttp {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct BackboneConfig {
    std::size_t image_size = 64;
    std::size_t patch_size = 8;
    std::size_t embed_dim = 32;
    std::size_t depth = 8;
    std::size_t num_heads = 4;
    std::size_t window_size = 4;
    /// 1-based indices of the blocks that attend globally.
    std::vector<std::size_t> global_layers{2, 4, 6, 8};
    std::size_t lora_rank = 4;
    std::size_t mlp_ratio = 4;

    /// Desk-scale default: 64x64 input, 8x8 token grid, 4 of 8 blocks global.
    static BackboneConfig toy() { return {}; }
    /// Base-size ViT at 512x512 input with rank-16 adapters.
    static BackboneConfig full_scale();

    std::size_t grid() const { return image_size / patch_size; }
    std::size_t tokens() const { return grid() * grid(); }
    std::size_t head_dim() const { return embed_dim / num_heads; }
    bool is_global(std::size_t layer) const;
    void validate() const;
};

/// Frozen affine map y = x W^T + b.
struct Linear {
    Tensor weight;  // (out, in)
    Tensor bias;    // (out), may be undefined

    Tensor forward(const Tensor& x) const;
};

struct LayerNormParams {
    Tensor gain;
    Tensor bias;

    Tensor forward(const Tensor& x) const;
};

/// Frozen projection W0 plus a trainable low-rank update Wa Wb^T.
struct LoraLinear {
    Tensor w0;    // (d_out, d_in), frozen
    Tensor bias;  // (d_out), frozen
    Tensor wa;    // (d_out, r)
    Tensor wb;    // (d_in, r)
    bool enabled = true;

    std::size_t rank() const { return wa.shape()[1]; }
    std::size_t in_features() const { return w0.shape()[1]; }
    std::size_t out_features() const { return w0.shape()[0]; }

    /// W0 x + Wa (Wb^T x) + b. The effective weight is never materialized.
    Tensor forward(const Tensor& x) const;
    /// Wa Wb^T as a (d_out, d_in) tensor, outside the graph.
    Tensor delta_weight() const;
    Tensor effective_weight() const;
};

struct AttentionLayer {
    LoraLinear q_proj;
    LoraLinear k_proj;
    LoraLinear v_proj;
    Linear out_proj;
    LayerNormParams norm1;
    LayerNormParams norm2;
    Linear mlp_fc1;
    Linear mlp_fc2;
    std::size_t num_heads = 1;
    std::optional<std::size_t> window;  // nullopt = global

    /// Pre-norm block on tokens x[b, n, d] laid out on a grid_h x grid_w grid.
    Tensor forward(const Tensor& x, std::size_t grid_h, std::size_t grid_w) const;
    Tensor attend(const Tensor& x, std::size_t grid_h, std::size_t grid_w) const;
};

/// Called after every global block with the running features as a (b, c, h, w)
/// map; the returned map replaces them.
using TapHook = std::function<Tensor(const Tensor& features, std::size_t tap_index, std::size_t layer)>;

struct EncoderOutput {
    Tensor features;  // (b, d, H/p, W/p)
    std::vector<Tensor> taps;
};

/// ViT image encoder with frozen base weights and low-rank adapters on Q/K/V.
class Encoder {
public:
    Encoder(const BackboneConfig& cfg, std::uint64_t seed);

    const BackboneConfig& config() const { return cfg_; }

    Tensor patch_embed(const Tensor& image) const;
    EncoderOutput forward(const Tensor& image, const TapHook& hook = {}) const;

    void set_lora_enabled(bool enabled);
    bool lora_enabled() const { return lora_enabled_; }
    /// Registers every tensor under `prefix`. Adapters count as trainable only
    /// when `lora_trainable`.
    void collect(ParamSet& out, const std::string& prefix, bool lora_trainable) const;

    std::vector<AttentionLayer>& layers() { return layers_; }
    const std::vector<AttentionLayer>& layers() const { return layers_; }
    std::vector<LoraLinear*> adapters();

private:
    BackboneConfig cfg_;
    Linear patch_proj_;
    Tensor pos_embed_;  // (n, d)
    std::vector<AttentionLayer> layers_;
    LayerNormParams neck_norm_;
    bool lora_enabled_ = true;
};

Tensor tokens_to_map(const Tensor& tokens, std::size_t grid_h, std::size_t grid_w);
Tensor map_to_tokens(const Tensor& map);

}  // namespace ttp
