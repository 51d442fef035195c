#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "ttp/trainer.hpp"

using namespace ttp;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny() {
    ModelConfig c;
    c.backbone.image_size = 32;
    c.backbone.embed_dim = 16;
    c.backbone.depth = 2;
    c.backbone.num_heads = 2;
    c.backbone.window_size = 2;
    c.backbone.global_layers = {2};
    c.backbone.lora_rank = 2;
    c.seed = 1;
    return c;
}

std::vector<BitemporalSample> pairs(std::size_t n, std::uint64_t seed = 3) {
    SynthConfig s;
    s.canvas = 32;
    s.min_extent = 4;
    s.max_extent = 8;
    s.seed = seed;
    return synth_generate(s, n);
}

TrainConfig quick(std::size_t epochs) {
    TrainConfig t;
    t.batch_size = 4;
    t.max_epochs = epochs;
    t.base_lr = 2e-3;
    t.seed = 5;
    return t;
}

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("ttp_trainer_" + name);
    fs::remove_all(p);
    return p;
}

std::vector<double> flat(const ParamSet& ps) {
    std::vector<double> out;
    for (const auto& e : ps.entries()) out.insert(out.end(), e.tensor.data().begin(), e.tensor.data().end());
    return out;
}

}  // namespace

TEST(Trainer, BatchesPerEpochRoundsUp) {
    EXPECT_EQ(batches_per_epoch(8, 8), 1u);
    EXPECT_EQ(batches_per_epoch(9, 8), 2u);
    EXPECT_EQ(batches_per_epoch(1, 8), 1u);
}

TEST(Trainer, ScheduleOverrides) {
    TrainConfig t;
    t.base_lr = 1e-3;
    auto s = make_schedule(t, 200);
    EXPECT_EQ(s.warmup_steps, 10u);
    EXPECT_DOUBLE_EQ(s.min_lr, 1e-5);
    t.warmup_steps = 0;
    t.min_lr = 0.0;
    s = make_schedule(t, 200);
    EXPECT_DOUBLE_EQ(s.lr_at(0), 1e-3);
    t.warmup_steps = 200;
    EXPECT_THROW(make_schedule(t, 200), std::invalid_argument);
}

TEST(Trainer, LossDecreasesAndHistoryIsComplete) {
    TtpModel m(tiny());
    auto cfg = quick(12);
    cfg.base_lr = 5e-3;
    cfg.augment = false;
    cfg.eval_every = 4;
    std::size_t callbacks = 0;
    const auto h = train(m, cfg, pairs(8), [&](const EpochRecord&) { ++callbacks; });
    ASSERT_EQ(h.epochs.size(), 12u);
    EXPECT_EQ(callbacks, 12u);
    EXPECT_EQ(h.step_losses.size(), 24u);
    EXPECT_LT(h.epochs.back().loss, 0.9 * h.epochs.front().loss);
    for (std::size_t i = 0; i < h.epochs.size(); ++i) {
        EXPECT_EQ(h.epochs[i].epoch, i + 1);
        EXPECT_EQ(h.epochs[i].metrics.has_value(), (i + 1) % 4 == 0);
    }
}

TEST(Trainer, BitExactRerun) {
    const auto data = pairs(6);
    TtpModel a(tiny());
    TtpModel b(tiny());
    const auto ha = train(a, quick(3), data);
    const auto hb = train(b, quick(3), data);
    EXPECT_EQ(ha.step_losses, hb.step_losses);
    EXPECT_EQ(flat(a.parameters()), flat(b.parameters()));
    auto other = quick(3);
    other.seed = 6;
    TtpModel c(tiny());
    EXPECT_NE(train(c, other, data).step_losses, ha.step_losses);
}

TEST(Trainer, EmptyDatasetThrows) {
    TtpModel m(tiny());
    EXPECT_THROW(train(m, quick(1), {}), DatasetError);
    EXPECT_THROW(evaluate(m, {}), DatasetError);
}

TEST(Trainer, InvalidConfigThrows) {
    TtpModel m(tiny());
    auto cfg = quick(1);
    cfg.batch_size = 0;
    EXPECT_THROW(train(m, cfg, pairs(2)), std::invalid_argument);
    cfg = quick(1);
    cfg.base_lr = -1;
    EXPECT_THROW(train(m, cfg, pairs(2)), std::invalid_argument);
}

TEST(Trainer, NonFiniteLossRaisesNumericError) {
    TtpModel m(tiny());
    m.head().final_proj.weight.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
    try {
        train(m, quick(2), pairs(4));
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
    }
}

TEST(Trainer, WritesMetricsCsvAndCheckpoint) {
    const fs::path dir = temp_dir("outputs");
    TtpModel m(tiny());
    auto cfg = quick(2);
    cfg.output_dir = dir;
    cfg.eval_every = 2;
    train(m, cfg, pairs(4));
    std::ifstream csv(dir / "metrics.csv");
    std::string header, line1, line2;
    std::getline(csv, header);
    std::getline(csv, line1);
    std::getline(csv, line2);
    EXPECT_EQ(header, "epoch,loss,P,R,F1,IoU,OA");
    EXPECT_TRUE(line1.starts_with("1,"));
    EXPECT_TRUE(line1.ends_with(",,,,,")) << line1;
    EXPECT_TRUE(line2.starts_with("2,"));
    EXPECT_FALSE(line2.ends_with(",")) << line2;
    EXPECT_TRUE(fs::exists(dir / "checkpoint" / "params.bin"));
    EXPECT_TRUE(fs::exists(dir / "checkpoint" / "manifest.json"));
    fs::remove_all(dir);
}

TEST(Trainer, CheckpointRoundTrip) {
    const fs::path dir = temp_dir("ckpt");
    TtpModel m(tiny());
    train(m, quick(2), pairs(4));
    save_checkpoint(dir, m, {{"note", "x"}});
    const auto info = read_checkpoint_manifest(dir);
    EXPECT_EQ(info.manifest["format"], "ttp-checkpoint");
    EXPECT_EQ(info.manifest["note"], "x");
    EXPECT_EQ(info.manifest["param_count"].get<std::size_t>(), m.parameters().count());

    TtpModel fresh(tiny());
    EXPECT_NE(flat(fresh.parameters()), flat(m.parameters()));
    load_checkpoint(dir, fresh);
    EXPECT_EQ(flat(fresh.parameters()), flat(m.parameters()));
    const auto data = pairs(3, 9);
    EXPECT_EQ(evaluate(fresh, data), evaluate(m, data));

    auto wider = tiny();
    wider.backbone.embed_dim = 32;
    TtpModel other(wider);
    EXPECT_THROW(load_checkpoint(dir, other), ParamMismatchError);
    auto no_gate = tiny();
    no_gate.flags.use_ttg = false;
    TtpModel other2(no_gate);
    EXPECT_THROW(load_checkpoint(dir, other2), ParamMismatchError);
    EXPECT_THROW(read_checkpoint_manifest(dir / "missing"), ParamMismatchError);
    fs::remove_all(dir);
}

TEST(Trainer, PredictMasksAtInputResolution) {
    TtpModel m(tiny());
    const auto data = pairs(3);
    const auto masks = predict_masks(m, data, 2);
    ASSERT_EQ(masks.size(), 3u);
    for (const auto& mk : masks) {
        EXPECT_EQ(mk.height, 32u);
        EXPECT_EQ(mk.width, 32u);
    }
    EXPECT_EQ(evaluate(m, data).total(), 3u * 32u * 32u);
}
