#include "ttp/model.hpp"

#include "ttp/ops.hpp"
#include "ttp/rng.hpp"

namespace ttp {

TtpModel::TtpModel(const ModelConfig& cfg) : cfg_(cfg), backbone_(cfg.backbone, cfg.seed) {
    const std::size_t c = cfg_.backbone.embed_dim;
    if (cfg_.flags.use_ttg) {
        for (std::size_t i = 0; i < cfg_.backbone.global_layers.size(); ++i) {
            gates_.push_back(gate_init(c, derive_seed(cfg_.seed, "gates." + std::to_string(i)),
                                       cfg_.backbone.global_layers[i], cfg_.gate_proj2_std));
        }
    }
    HeadConfig hc;
    hc.in_channels = c;
    hc.d_head = cfg_.d_head;
    hc.up_channels = cfg_.up_channels;
    hc.multilevel = cfg_.flags.use_multilevel;
    head_ = head_init(hc, cfg_.seed);
    backbone_.set_lora_enabled(cfg_.flags.use_lora);

    ParamSet all = parameters();
    for (auto& p : all.entries()) p.tensor.set_requires_grad(p.trainable);
}

Tensor TtpModel::forward_logits(const Tensor& img0, const Tensor& img1, ForwardTrace* trace) const {
    if (img0.shape() != img1.shape()) {
        throw DimensionError("image pair differs in shape: " + to_string(img0.shape()) + " vs " +
                             to_string(img1.shape()));
    }
    const std::size_t b = img0.shape()[0];
    // Both phases share one encoder pass: the batch holds [img0; img1].
    Tensor stacked = concat({img0, img1}, 0);
    TapHook hook = [&](const Tensor& map, std::size_t tap, std::size_t) {
        auto halves = split(map, 0, {b, b});
        Tensor x0 = halves[0];
        Tensor x1 = halves[1];
        if (cfg_.flags.use_ttg) {
            auto g = gate_forward(gates_.at(tap), x0, x1);
            if (trace) trace->masks.push_back(g.mask);
            x0 = g.y0;
            x1 = g.y1;
        }
        if (trace) {
            trace->stream0.push_back(x0);
            trace->stream1.push_back(x1);
        }
        return cfg_.flags.use_ttg ? concat({x0, x1}, 0) : map;
    };
    const bool need_hook = cfg_.flags.use_ttg || trace != nullptr;
    auto enc = backbone_.forward(stacked, need_hook ? hook : TapHook{});
    auto feats = split(enc.features, 0, {b, b});
    return head_forward(feats[0], feats[1], head_);
}

Tensor TtpModel::forward(const Tensor& img0, const Tensor& img1, ForwardTrace* trace) const {
    return sigmoid(forward_logits(img0, img1, trace));
}

ParamSet TtpModel::parameters() const {
    ParamSet out;
    backbone_.collect(out, "backbone.", cfg_.flags.use_lora);
    for (std::size_t i = 0; i < gates_.size(); ++i) gates_[i].collect(out, "gates." + std::to_string(i) + ".", true);
    head_.collect(out, "head.", true);
    return out;
}

}  // namespace ttp
