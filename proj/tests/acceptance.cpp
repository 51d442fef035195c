// Acceptance gate: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.
#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>

#include "ttp/ablation.hpp"
#include "ttp/gradcheck.hpp"
#include "ttp/metrics.hpp"
#include "ttp/model.hpp"
#include "ttp/ops.hpp"
#include "ttp/optim.hpp"
#include "ttp/rng.hpp"
#include "ttp/trainer.hpp"

using namespace ttp;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return INFINITY;
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

ModelConfig gradcheck_model() {
    ModelConfig c;
    c.backbone.image_size = 16;
    c.backbone.patch_size = 8;
    c.backbone.embed_dim = 8;
    c.backbone.depth = 2;
    c.backbone.num_heads = 2;
    c.backbone.window_size = 1;
    c.backbone.global_layers = {2};
    c.backbone.lora_rank = 2;
    c.d_head = 4;
    c.seed = 1;
    return c;
}

std::vector<BitemporalSample> synthetic_pairs(std::size_t n, std::uint64_t seed) {
    SynthConfig s;
    s.seed = seed;
    return synth_generate(s, n);
}

// 1. Every trainable gradient against central differences.
Outcome gradient_integrity() {
    const auto t0 = Clock::now();
    const TtpModel m(gradcheck_model());
    ParamSet trainable = m.trainable_parameters();
    Rng rng(2);
    // Off the zero init so that every path carries gradient.
    for (auto& e : trainable.entries()) {
        for (auto& v : e.tensor.mutable_data()) v += rng.normal(0, 0.2);
    }
    const Tensor a = rand_uniform({2, 3, 16, 16}, rng, 0, 1);
    const Tensor b = rand_uniform({2, 3, 16, 16}, rng, 0, 1);
    std::vector<double> y(2 * 8 * 8);
    for (auto& v : y) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
    const Tensor target = Tensor::from({2, 1, 8, 8}, y);
    auto loss = [&] { return bce_loss(m.forward(a, b), target); };
    loss().backward();
    double worst = 0;
    std::string worst_name;
    for (auto& e : trainable.entries()) {
        const auto fd = finite_diff_param_grad([&] { NoGradGuard ng; return loss().item(); }, e.tensor, 1e-5);
        const double err = relative_error(e.tensor.grad(), fd);
        if (err > worst || std::isnan(err)) {
            worst = err;
            worst_name = e.name;
        }
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-3 && secs < 60,
            fmt("%zu tensors, worst rel err %.2e (%s), %.1f s", trainable.size(), worst, worst_name.c_str(), secs)};
}

// 2. Zero adapters and identity gates leave the frozen path untouched.
Outcome init_identity() {
    ModelConfig cfg;  // toy
    cfg.seed = 3;
    const TtpModel full(cfg);
    Rng rng(4);
    const Tensor a = rand_uniform({2, 3, 64, 64}, rng, 0, 1);
    const Tensor b = rand_uniform({2, 3, 64, 64}, rng, 0, 1);
    NoGradGuard ng;

    Encoder enc(cfg.backbone, cfg.seed);
    const Tensor with = enc.forward(a).features;
    enc.set_lora_enabled(false);
    const double enc_diff = max_abs_diff(with, enc.forward(a).features);

    ModelConfig stripped = cfg;
    stripped.flags = {false, true, false};
    const double model_diff = max_abs_diff(full.forward(a, b), TtpModel(stripped).forward(a, b));
    return {enc_diff == 0.0 && model_diff == 0.0,
            fmt("encoder max diff %g, model vs (w/o ttg, tuning) max diff %g", enc_diff, model_diff)};
}

// 3. Numerical rank of every adapter update after training.
Outcome low_rank_bound() {
    const auto t0 = Clock::now();
    ModelConfig cfg;
    cfg.backbone.image_size = 32;
    cfg.backbone.depth = 4;
    cfg.backbone.global_layers = {2, 4};
    const auto data = synthetic_pairs(4, 50);
    std::vector<BitemporalSample> small;
    for (const auto& s : data) small.push_back(tile(s, 32, 32)[0]);
    std::size_t checked = 0, worst_rank = 0, violations = 0;
    for (std::uint64_t state = 0; state < 50; ++state) {
        cfg.seed = state;
        TtpModel m(cfg);
        TrainConfig tc;
        tc.batch_size = 4;
        tc.max_epochs = 3;
        tc.base_lr = 1e-2;
        tc.seed = state;
        tc.eval_every = 0;
        train(m, tc, small);
        for (auto* l : m.backbone().adapters()) {
            const Tensor d = l->delta_weight();
            const auto rows = static_cast<Eigen::Index>(d.shape()[0]);
            const auto cols = static_cast<Eigen::Index>(d.shape()[1]);
            const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> mat(
                d.data().data(), rows, cols);
            const auto s = Eigen::JacobiSVD<Eigen::MatrixXd>(mat).singularValues();
            std::size_t rank = 0;
            for (Eigen::Index i = 0; i < s.size(); ++i) rank += s(i) > 1e-8 * s(0);
            worst_rank = std::max(worst_rank, rank);
            violations += rank > l->rank();
            ++checked;
        }
    }
    return {violations == 0 && checked > 0,
            fmt("%zu adapters over 50 states, max rank %zu (r = %zu), %.1f s", checked, worst_rank,
                cfg.backbone.lora_rank, seconds_since(t0))};
}

// 4. Frozen tensors after 100 optimizer steps.
Outcome freeze_policy() {
    const auto t0 = Clock::now();
    ModelConfig cfg;
    TtpModel m(cfg);
    const ParamSet frozen = m.frozen_parameters();
    std::vector<std::vector<double>> snapshot;
    for (const auto& e : frozen.entries()) snapshot.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
    TrainConfig tc;
    tc.batch_size = 2;
    tc.max_epochs = 25;  // 8 pairs, 4 steps per epoch
    tc.eval_every = 0;
    const History h = train(m, tc, synthetic_pairs(8, 60));
    std::size_t changed = 0;
    for (std::size_t i = 0; i < frozen.size(); ++i) {
        const auto v = frozen.entries()[i].tensor.data();
        changed += !std::equal(v.begin(), v.end(), snapshot[i].begin(), snapshot[i].end());
    }
    return {changed == 0 && h.step_losses.size() == 100,
            fmt("%zu steps, %zu of %zu frozen tensors changed, %.1f s", h.step_losses.size(), changed, frozen.size(),
                seconds_since(t0))};
}

// 5. A window covering the whole grid is global attention.
Outcome window_global() {
    ModelConfig cfg;
    const TtpModel m(cfg);
    Rng rng(5);
    double worst = 0;
    for (auto layer : m.backbone().layers()) {
        for (auto* p : {&layer.q_proj, &layer.k_proj, &layer.v_proj}) {
            for (auto& v : p->wb.mutable_data()) v = rng.normal(0, 0.5);
        }
        const std::size_t g = cfg.backbone.grid();
        const Tensor x = randn({2, g * g, cfg.backbone.embed_dim}, rng);
        NoGradGuard ng;
        layer.window = std::nullopt;
        const Tensor global = layer.forward(x, g, g);
        layer.window = g;
        worst = std::max(worst, max_abs_diff(global, layer.forward(x, g, g)));
    }
    return {worst < 1e-10, fmt("max abs diff %.3g over %zu layers", worst, cfg.backbone.depth)};
}

// 6. compute() against brute-force counting.
Outcome metrics_oracle() {
    Rng rng(6);
    std::size_t mismatches = 0;
    double worst_identity = 0;
    for (int k = 0; k < 100; ++k) {
        const double density = rng.uniform(0.02, 0.6);
        Mask pred(64, 64), gt(64, 64);
        for (auto& v : gt.values) v = rng.bernoulli(density);
        const double flip = rng.uniform(0.0, 0.5);
        for (std::size_t i = 0; i < pred.values.size(); ++i) {
            pred.values[i] = rng.bernoulli(flip) ? !gt.values[i] : gt.values[i];
        }
        double tp = 0, fp = 0, fn = 0, tn = 0;
        for (std::size_t i = 0; i < pred.values.size(); ++i) {
            const bool p = pred.values[i], g = gt.values[i];
            tp += p && g;
            fp += p && !g;
            fn += !p && g;
            tn += !p && !g;
        }
        const MetricReport m = compute(accumulate(pred, gt));
        const bool ok = m.precision == (tp + fp > 0 ? 100.0 * tp / (tp + fp) : 0.0) &&
                        m.recall == (tp + fn > 0 ? 100.0 * tp / (tp + fn) : 0.0) &&
                        m.iou == (tp + fp + fn > 0 ? 100.0 * tp / (tp + fp + fn) : 0.0) &&
                        m.oa == 100.0 * (tp + tn) / 4096.0 &&
                        m.f1 == (tp + fp + fn > 0 ? 100.0 * 2 * tp / (2 * tp + fp + fn) : 0.0);
        mismatches += !ok;
        const double iou = m.iou / 100.0;
        worst_identity = std::max(worst_identity, std::abs(m.f1 / 100.0 - 2 * iou / (1 + iou)));
    }
    return {mismatches == 0 && worst_identity < 1e-12,
            fmt("%zu of 100 pairs mismatched, F1/IoU identity error %.2e", mismatches, worst_identity)};
}

// 7. Published baseline rows through the same formulas.
Outcome published_arithmetic() {
    struct Row {
        const char* name;
        double p, r, f1, iou;
    };
    bool ok = true;
    std::string detail;
    for (const Row row : {Row{"BIT", 89.2, 89.4, 89.3, 80.7}, Row{"ChangeFormer", 92.1, 88.8, 90.4, 82.5}}) {
        const double f1 = f1_from_pr(row.p, row.r);
        const double iou = iou_from_f1(f1);
        const double f1r = std::round(f1 * 10) / 10, iour = std::round(iou * 10) / 10;
        ok = ok && std::abs(f1r - row.f1) <= 0.05 + 1e-9 && std::abs(iour - row.iou) <= 0.05 + 1e-9;
        detail += fmt("%s F1 %.2f IoU %.2f; ", row.name, f1, iou);
    }
    return {ok, detail};
}

// 8. Toy model memorises 8 pairs.
Outcome overfit_fixture() {
    const auto t0 = Clock::now();
    ModelConfig cfg;
    TtpModel m(cfg);
    const auto data = synthetic_pairs(8, 1000);
    TrainConfig tc;
    tc.max_epochs = 300;  // one batch of 8 per epoch
    tc.base_lr = 2e-3;
    tc.full_res_loss = true;
    tc.augment = false;
    tc.eval_every = 0;
    const History h = train(m, tc, data);
    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    double bce = 0;
    {
        NoGradGuard ng;
        const Tensor logits = m.forward_logits(stack_images(data, idx, 0), stack_images(data, idx, 1));
        bce = bce_loss(sigmoid(bilinear_resize(logits, 64, 64)), mask_targets(data, idx, 64, 64)).item();
    }
    const MetricReport r = compute(evaluate(m, data));
    const double secs = seconds_since(t0);
    return {h.step_losses.size() <= 300 && bce < 0.05 && r.f1 >= 95.0 && secs < 300,
            fmt("%zu steps, BCE %.4f, F1 %.2f, %.0f s", h.step_losses.size(), bce, r.f1, secs)};
}

// 9. Ablation medians on a held-out split.
Outcome ablation_ordering() {
    const auto t0 = Clock::now();
    RunConfig cfg;
    cfg.n_seeds = 5;
    cfg.data.train_count = 32;
    cfg.data.eval_count = 32;
    cfg.training.max_epochs = 40;
    cfg.training.base_lr = 2e-3;
    cfg.training.full_res_loss = true;
    const AblationReport rep = run_ablation(cfg, [&](const AblationRun& r) {
        std::printf("    %-26s seed %llu F1 %.2f (%.0f s)\n", r.variant.c_str(), static_cast<unsigned long long>(r.seed),
                    r.metrics.f1, seconds_since(t0));
        std::fflush(stdout);
    });
    const double full = rep.rows[0].median.f1, no_ttg = rep.rows[1].median.f1, no_ml = rep.rows[2].median.f1,
                 frozen = rep.rows[3].median.f1;
    const double secs = seconds_since(t0);
    const bool ok = full >= no_ttg && full >= frozen + 2 && no_ttg >= frozen + 2 && no_ml >= frozen + 2 && secs < 1800;
    return {ok, fmt("median F1 %.2f / %.2f / %.2f / %.2f, %.0f s", full, no_ttg, no_ml, frozen, secs)};
}

// 10. Schedule endpoints at the default learning rate.
Outcome scheduler_endpoints() {
    bool ok = true;
    std::string detail;
    for (std::size_t total : {300u, 1000u, 11125u}) {
        const WarmupCosine s = WarmupCosine::standard(total);
        const double at_warmup = s.lr_at(s.warmup_steps);
        const double last = s.lr_at(total - 1);
        const double rel = std::abs(last - s.min_lr) / s.min_lr;
        ok = ok && at_warmup == 4e-4 && rel <= 1e-3;
        detail += fmt("T=%zu: lr(warmup)=%g, lr(T-1)/min-1=%.1e; ", total, at_warmup, rel);
    }
    return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"gradient integrity", gradient_integrity},
        {"init-identity chain", init_identity},
        {"low-rank bound", low_rank_bound},
        {"freeze policy", freeze_policy},
        {"window/global equivalence", window_global},
        {"metrics oracle", metrics_oracle},
        {"published arithmetic", published_arithmetic},
        {"overfit fixture", overfit_fixture},
        {"ablation ordering", ablation_ordering},
        {"scheduler endpoints", scheduler_endpoints},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
