#include "ttp/head.hpp"

#include <cmath>

#include "ttp/ops.hpp"
#include "ttp/rng.hpp"

namespace ttp {

namespace {

Tensor init_weight(std::uint64_t seed, const std::string& name, Shape shape, std::size_t fan_in) {
    Rng rng(derive_seed(seed, name));
    return randn(std::move(shape), rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

Linear make_proj(std::uint64_t seed, const std::string& name, std::size_t in, std::size_t out) {
    return {init_weight(seed, name + ".weight", {out, in}, in), Tensor::zeros({out})};
}

TransposedConv make_up(std::uint64_t seed, const std::string& name, std::size_t in, std::size_t out) {
    return {init_weight(seed, name + ".kernel", {in, out, 2, 2}, in), Tensor::zeros({out})};
}

}  // namespace

std::size_t HeadConfig::resolved_up_channels() const {
    if (up_channels != 0) return up_channels;
    return in_channels >= 4 ? in_channels / 4 : 1;
}

Tensor TransposedConv::forward(const Tensor& x) const { return conv2d_transpose(x, kernel, bias, 2); }

void HeadParams::collect(ParamSet& out, const std::string& prefix, bool trainable) const {
    out.add(prefix + "fuse.weight", fuse.weight, trainable);
    out.add(prefix + "fuse.bias", fuse.bias, trainable);
    if (cfg.multilevel) {
        out.add(prefix + "up4.0.kernel", up4a.kernel, trainable);
        out.add(prefix + "up4.0.bias", up4a.bias, trainable);
        out.add(prefix + "up4.1.kernel", up4b.kernel, trainable);
        out.add(prefix + "up4.1.bias", up4b.bias, trainable);
        out.add(prefix + "up2.kernel", up2.kernel, trainable);
        out.add(prefix + "up2.bias", up2.bias, trainable);
    }
    for (std::size_t i = 0; i < level_proj.size(); ++i) {
        out.add(prefix + "level_proj." + std::to_string(i) + ".weight", level_proj[i].weight, trainable);
        out.add(prefix + "level_proj." + std::to_string(i) + ".bias", level_proj[i].bias, trainable);
    }
    out.add(prefix + "final.weight", final_proj.weight, trainable);
    out.add(prefix + "final.bias", final_proj.bias, trainable);
}

HeadParams head_init(const HeadConfig& cfg, std::uint64_t seed) {
    if (cfg.in_channels == 0 || cfg.d_head == 0) throw DimensionError("head channels must be positive");
    HeadParams p;
    p.cfg = cfg;
    const std::size_t c = cfg.in_channels;
    p.fuse = make_proj(seed, "head.fuse", 2 * c, c);
    if (cfg.multilevel) {
        const std::size_t u = cfg.resolved_up_channels();
        p.up4a = make_up(seed, "head.up4.0", c, u);
        p.up4b = make_up(seed, "head.up4.1", u, u);
        p.up2 = make_up(seed, "head.up2", c, u);
        const std::size_t level_channels[] = {u, u, c, c};
        for (std::size_t i = 0; i < 4; ++i) {
            p.level_proj.push_back(
                make_proj(seed, "head.level_proj." + std::to_string(i), level_channels[i], cfg.d_head));
        }
    } else {
        // Same stream as the identity level of the full head.
        p.level_proj.push_back(make_proj(seed, "head.level_proj.2", c, cfg.d_head));
    }
    p.final_proj = make_proj(seed, "head.final", p.level_proj.size() * cfg.d_head, 1);
    return p;
}

std::vector<Tensor> build_pyramid(const Tensor& fused, const HeadParams& p) {
    if (!p.cfg.multilevel) return {fused};
    const auto& s = fused.shape();
    if (s.size() != 4 || s[2] < 2 || s[3] < 2 || s[2] % 2 != 0 || s[3] % 2 != 0) {
        throw DimensionError("pyramid input must have even spatial dims >= 2, got " + to_string(s));
    }
    return {p.up4b.forward(p.up4a.forward(fused)), p.up2.forward(fused), fused, max_pool2d(fused, 2, 2)};
}

Tensor head_forward(const Tensor& x0, const Tensor& x1, const HeadParams& p) {
    if (x0.shape() != x1.shape()) {
        throw DimensionError("head inputs differ in shape: " + to_string(x0.shape()) + " vs " + to_string(x1.shape()));
    }
    if (x0.dim() != 4 || x0.shape()[1] != p.cfg.in_channels) {
        throw DimensionError("head expects (b," + std::to_string(p.cfg.in_channels) + ",h,w), got " +
                             to_string(x0.shape()));
    }
    const std::size_t out_h = 4 * x0.shape()[2];
    const std::size_t out_w = 4 * x0.shape()[3];
    Tensor fused = channel_linear(concat({x0, x1}, 1), p.fuse.weight, p.fuse.bias);
    auto levels = build_pyramid(fused, p);
    std::vector<Tensor> projected;
    projected.reserve(levels.size());
    for (std::size_t i = 0; i < levels.size(); ++i) {
        Tensor f = gelu(channel_linear(levels[i], p.level_proj[i].weight, p.level_proj[i].bias));
        if (f.shape()[2] != out_h || f.shape()[3] != out_w) f = bilinear_resize(f, out_h, out_w);
        projected.push_back(f);
    }
    Tensor merged = projected.size() == 1 ? projected.front() : concat(projected, 1);
    return channel_linear(merged, p.final_proj.weight, p.final_proj.bias);
}

std::vector<Mask> logits_to_fullres_mask(const Tensor& logits, std::size_t height, std::size_t width,
                                         double threshold) {
    if (logits.dim() != 4 || logits.shape()[1] != 1) {
        throw DimensionError("expected (b,1,h,w) logits, got " + to_string(logits.shape()));
    }
    NoGradGuard no_grad;
    Tensor prob = sigmoid(bilinear_resize(logits.detach(), height, width));
    const std::size_t b = logits.shape()[0];
    std::vector<Mask> masks;
    const auto pd = prob.data();
    for (std::size_t i = 0; i < b; ++i) {
        Mask m(height, width);
        for (std::size_t j = 0; j < height * width; ++j) m.values[j] = pd[i * height * width + j] >= threshold ? 1 : 0;
        masks.push_back(std::move(m));
    }
    return masks;
}

}  // namespace ttp
