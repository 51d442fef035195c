#include "ttp/backbone.hpp"

#include <cmath>

#include "ttp/ops.hpp"
#include "ttp/rng.hpp"

namespace ttp {

namespace {

constexpr double kFrozenInitStd = 0.02;

Tensor init_normal(std::uint64_t seed, const std::string& name, Shape shape, double stddev) {
    Rng rng(derive_seed(seed, name));
    return randn(std::move(shape), rng, stddev);
}

Linear make_linear(std::uint64_t seed, const std::string& name, std::size_t in, std::size_t out) {
    return {init_normal(seed, name + ".weight", {out, in}, kFrozenInitStd), Tensor::zeros({out})};
}

LayerNormParams make_norm(std::size_t d) { return {Tensor::full({d}, 1.0), Tensor::zeros({d})}; }

LoraLinear make_lora(std::uint64_t seed, const std::string& name, std::size_t d, std::size_t r) {
    LoraLinear l;
    l.w0 = init_normal(seed, name + ".w0", {d, d}, kFrozenInitStd);
    l.bias = Tensor::zeros({d});
    l.wa = init_normal(seed, name + ".lora_a", {d, r}, kFrozenInitStd);
    l.wb = Tensor::zeros({d, r});
    return l;
}

}  // namespace

BackboneConfig BackboneConfig::full_scale() {
    BackboneConfig c;
    c.image_size = 512;
    c.patch_size = 16;
    c.embed_dim = 768;
    c.depth = 12;
    c.num_heads = 12;
    c.window_size = 8;
    c.global_layers = {3, 6, 9, 12};
    c.lora_rank = 16;
    return c;
}

bool BackboneConfig::is_global(std::size_t layer) const {
    for (auto g : global_layers) {
        if (g == layer) return true;
    }
    return false;
}

void BackboneConfig::validate() const {
    if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
        throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by patch_size " +
                          std::to_string(patch_size));
    }
    if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0) {
        throw ConfigError("embed_dim must be a positive multiple of num_heads");
    }
    if (depth == 0) throw ConfigError("depth must be positive");
    if (global_layers.empty()) throw ConfigError("at least one global layer is required");
    for (std::size_t i = 0; i < global_layers.size(); ++i) {
        if (global_layers[i] < 1 || global_layers[i] > depth) {
            throw ConfigError("global layer index " + std::to_string(global_layers[i]) + " outside [1, depth]");
        }
        if (i > 0 && global_layers[i] <= global_layers[i - 1]) {
            throw ConfigError("global layer indices must be strictly increasing");
        }
    }
    if (global_layers.size() < depth) {
        if (window_size == 0 || grid() % window_size != 0) {
            throw ConfigError("token grid " + std::to_string(grid()) + " is not divisible by window_size " +
                              std::to_string(window_size));
        }
    }
    if (lora_rank == 0 || 2 * lora_rank > embed_dim) {
        throw ConfigError("lora_rank must satisfy 1 <= r <= embed_dim / 2");
    }
    if (mlp_ratio == 0) throw ConfigError("mlp_ratio must be positive");
}

Tensor Linear::forward(const Tensor& x) const { return linear(x, weight, bias); }

Tensor LayerNormParams::forward(const Tensor& x) const { return layer_norm(x, gain, bias); }

Tensor LoraLinear::forward(const Tensor& x) const {
    Tensor y = matmul_nt(x, w0);
    if (enabled) y = add(y, matmul_nt(matmul(x, wb), wa));
    return add(y, bias);
}

Tensor LoraLinear::delta_weight() const {
    NoGradGuard no_grad;
    return matmul_nt(wa.detach(), wb.detach());
}

Tensor LoraLinear::effective_weight() const {
    NoGradGuard no_grad;
    return add(w0.detach(), delta_weight());
}

Tensor AttentionLayer::attend(const Tensor& x, std::size_t grid_h, std::size_t grid_w) const {
    const std::size_t b = x.shape()[0];
    const std::size_t d = x.shape()[2];
    const std::size_t hd = d / num_heads;

    std::size_t groups = b;
    std::size_t tokens = grid_h * grid_w;
    std::size_t ws = 0;
    auto partition = [&](const Tensor& t) {
        if (!window) return t;
        Tensor r = reshape(t, {b, grid_h / ws, ws, grid_w / ws, ws, d});
        return reshape(permute(r, {0, 1, 3, 2, 4, 5}), {groups, tokens, d});
    };
    if (window) {
        ws = *window;
        if (ws == 0 || grid_h % ws != 0 || grid_w % ws != 0) {
            throw DimensionError("token grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                                 " is not divisible by window " + std::to_string(ws));
        }
        groups = b * (grid_h / ws) * (grid_w / ws);
        tokens = ws * ws;
    }

    auto heads = [&](const Tensor& t) {
        return permute(reshape(partition(t), {groups, tokens, num_heads, hd}), {0, 2, 1, 3});
    };
    Tensor q = heads(q_proj.forward(x));
    Tensor k = heads(k_proj.forward(x));
    Tensor v = heads(v_proj.forward(x));

    Tensor scores = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(hd)));
    Tensor ctx = matmul(softmax(scores, -1), v);  // (groups, heads, tokens, hd)
    ctx = reshape(permute(ctx, {0, 2, 1, 3}), {groups, tokens, d});
    if (window) {
        ctx = reshape(ctx, {b, grid_h / ws, grid_w / ws, ws, ws, d});
        ctx = reshape(permute(ctx, {0, 1, 3, 2, 4, 5}), {b, grid_h * grid_w, d});
    }
    return out_proj.forward(ctx);
}

Tensor AttentionLayer::forward(const Tensor& x, std::size_t grid_h, std::size_t grid_w) const {
    if (x.dim() != 3 || x.shape()[1] != grid_h * grid_w) {
        throw DimensionError("attention input " + to_string(x.shape()) + " does not match a " +
                             std::to_string(grid_h) + "x" + std::to_string(grid_w) + " grid");
    }
    Tensor h = add(x, attend(norm1.forward(x), grid_h, grid_w));
    Tensor m = mlp_fc2.forward(gelu(mlp_fc1.forward(norm2.forward(h))));
    return add(h, m);
}

Encoder::Encoder(const BackboneConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t d = cfg_.embed_dim;
    const std::size_t patch_dim = 3 * cfg_.patch_size * cfg_.patch_size;
    patch_proj_ = make_linear(seed, "backbone.patch_embed", patch_dim, d);
    pos_embed_ = init_normal(seed, "backbone.pos_embed", {cfg_.tokens(), d}, kFrozenInitStd);
    for (std::size_t i = 0; i < cfg_.depth; ++i) {
        const std::string p = "backbone.blocks." + std::to_string(i);
        AttentionLayer layer;
        layer.q_proj = make_lora(seed, p + ".attn.q", d, cfg_.lora_rank);
        layer.k_proj = make_lora(seed, p + ".attn.k", d, cfg_.lora_rank);
        layer.v_proj = make_lora(seed, p + ".attn.v", d, cfg_.lora_rank);
        layer.out_proj = make_linear(seed, p + ".attn.out", d, d);
        layer.norm1 = make_norm(d);
        layer.norm2 = make_norm(d);
        layer.mlp_fc1 = make_linear(seed, p + ".mlp.fc1", d, d * cfg_.mlp_ratio);
        layer.mlp_fc2 = make_linear(seed, p + ".mlp.fc2", d * cfg_.mlp_ratio, d);
        layer.num_heads = cfg_.num_heads;
        if (!cfg_.is_global(i + 1)) layer.window = cfg_.window_size;
        layers_.push_back(std::move(layer));
    }
    neck_norm_ = make_norm(d);
}

Tensor Encoder::patch_embed(const Tensor& image) const {
    if (image.dim() != 4 || image.shape()[1] != 3) {
        throw DimensionError("encoder expects (b,3,H,W) images, got " + to_string(image.shape()));
    }
    const std::size_t b = image.shape()[0];
    const std::size_t H = image.shape()[2];
    const std::size_t W = image.shape()[3];
    const std::size_t p = cfg_.patch_size;
    if (H % p != 0 || W % p != 0) {
        throw DimensionError("image " + std::to_string(H) + "x" + std::to_string(W) +
                             " is not divisible by patch size " + std::to_string(p));
    }
    const std::size_t gh = H / p;
    const std::size_t gw = W / p;
    if (gh * gw != cfg_.tokens()) {
        throw DimensionError("image " + std::to_string(H) + "x" + std::to_string(W) + " does not match configured size " +
                             std::to_string(cfg_.image_size));
    }
    Tensor patches = reshape(image, {b, 3, gh, p, gw, p});
    patches = reshape(permute(patches, {0, 2, 4, 1, 3, 5}), {b, gh * gw, 3 * p * p});
    return add(patch_proj_.forward(patches), pos_embed_);
}

EncoderOutput Encoder::forward(const Tensor& image, const TapHook& hook) const {
    const std::size_t g = cfg_.grid();
    Tensor x = patch_embed(image);
    EncoderOutput out;
    std::size_t tap = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        x = layers_[i].forward(x, g, g);
        if (!layers_[i].window) {
            Tensor map = tokens_to_map(x, g, g);
            if (hook) {
                map = hook(map, tap, i + 1);
                x = map_to_tokens(map);
            }
            out.taps.push_back(map);
            ++tap;
        }
    }
    out.features = tokens_to_map(neck_norm_.forward(x), g, g);
    return out;
}

void Encoder::set_lora_enabled(bool enabled) {
    lora_enabled_ = enabled;
    for (auto& layer : layers_) {
        layer.q_proj.enabled = enabled;
        layer.k_proj.enabled = enabled;
        layer.v_proj.enabled = enabled;
    }
}

std::vector<LoraLinear*> Encoder::adapters() {
    std::vector<LoraLinear*> out;
    for (auto& layer : layers_) {
        out.push_back(&layer.q_proj);
        out.push_back(&layer.k_proj);
        out.push_back(&layer.v_proj);
    }
    return out;
}

void Encoder::collect(ParamSet& out, const std::string& prefix, bool lora_trainable) const {
    out.add(prefix + "patch_embed.weight", patch_proj_.weight, false);
    out.add(prefix + "patch_embed.bias", patch_proj_.bias, false);
    out.add(prefix + "pos_embed", pos_embed_, false);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        const std::string p = prefix + "blocks." + std::to_string(i) + ".";
        const std::pair<const char*, const LoraLinear*> projections[] = {
            {"attn.q", &l.q_proj}, {"attn.k", &l.k_proj}, {"attn.v", &l.v_proj}};
        for (const auto& [name, proj] : projections) {
            out.add(p + name + ".w0", proj->w0, false);
            out.add(p + name + ".bias", proj->bias, false);
            out.add(p + name + ".lora_a", proj->wa, lora_trainable);
            out.add(p + name + ".lora_b", proj->wb, lora_trainable);
        }
        out.add(p + "attn.out.weight", l.out_proj.weight, false);
        out.add(p + "attn.out.bias", l.out_proj.bias, false);
        out.add(p + "norm1.gain", l.norm1.gain, false);
        out.add(p + "norm1.bias", l.norm1.bias, false);
        out.add(p + "norm2.gain", l.norm2.gain, false);
        out.add(p + "norm2.bias", l.norm2.bias, false);
        out.add(p + "mlp.fc1.weight", l.mlp_fc1.weight, false);
        out.add(p + "mlp.fc1.bias", l.mlp_fc1.bias, false);
        out.add(p + "mlp.fc2.weight", l.mlp_fc2.weight, false);
        out.add(p + "mlp.fc2.bias", l.mlp_fc2.bias, false);
    }
    out.add(prefix + "neck_norm.gain", neck_norm_.gain, false);
    out.add(prefix + "neck_norm.bias", neck_norm_.bias, false);
}

Tensor tokens_to_map(const Tensor& tokens, std::size_t grid_h, std::size_t grid_w) {
    const std::size_t b = tokens.shape()[0];
    const std::size_t d = tokens.shape()[2];
    return reshape(permute(tokens, {0, 2, 1}), {b, d, grid_h, grid_w});
}

Tensor map_to_tokens(const Tensor& map) {
    const auto& s = map.shape();
    return permute(reshape(map, {s[0], s[1], s[2] * s[3]}), {0, 2, 1});
}

}  // namespace ttp
