#include "ttp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ttp/ops.hpp"
#include "ttp/rng.hpp"

namespace fs = std::filesystem;

namespace ttp {

namespace {

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kParamsName = "params.bin";

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng.engine());
    return order;
}

Tensor batch_loss(const TtpModel& model, const std::vector<BitemporalSample>& batch, bool full_res) {
    std::vector<std::size_t> idx(batch.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const Tensor x0 = stack_images(batch, idx, 0);
    const Tensor x1 = stack_images(batch, idx, 1);
    Tensor logits = model.forward_logits(x0, x1);
    if (full_res) {
        const std::size_t h = batch.front().mask.height;
        const std::size_t w = batch.front().mask.width;
        return bce_loss(sigmoid(bilinear_resize(logits, h, w)), mask_targets(batch, idx, h, w));
    }
    const std::size_t out = model.output_size();
    return bce_loss(sigmoid(logits), mask_targets(batch, idx, out, out));
}

void write_csv_row(std::ostream& out, const EpochRecord& r) {
    out << r.epoch << ',' << r.loss;
    if (r.metrics) {
        const auto& m = *r.metrics;
        out << ',' << m.precision << ',' << m.recall << ',' << m.f1 << ',' << m.iou << ',' << m.oa;
    } else {
        out << ",,,,,";
    }
    out << '\n';
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
    if (max_epochs == 0) throw std::invalid_argument("max_epochs must be at least 1");
    if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw std::invalid_argument("base_lr must be positive");
    if (min_lr && (*min_lr < 0.0 || *min_lr > base_lr)) throw std::invalid_argument("min_lr must lie in [0, base_lr]");
}

std::size_t batches_per_epoch(std::size_t samples, std::size_t batch_size) {
    return (samples + batch_size - 1) / batch_size;
}

WarmupCosine make_schedule(const TrainConfig& cfg, std::size_t total_steps) {
    WarmupCosine s = WarmupCosine::standard(total_steps, cfg.base_lr);
    if (cfg.warmup_steps) s.warmup_steps = *cfg.warmup_steps;
    if (cfg.min_lr) s.min_lr = *cfg.min_lr;
    if (s.warmup_steps >= total_steps) {
        throw std::invalid_argument("warmup_steps (" + std::to_string(s.warmup_steps) +
                                    ") must be below the total step count (" + std::to_string(total_steps) + ")");
    }
    return s;
}

History train(TtpModel& model, const TrainConfig& cfg, const std::vector<BitemporalSample>& data,
              const EpochCallback& on_epoch) {
    cfg.validate();
    if (data.empty()) throw DatasetError("training set is empty");
    const std::size_t per_epoch = batches_per_epoch(data.size(), cfg.batch_size);
    const WarmupCosine schedule = make_schedule(cfg, per_epoch * cfg.max_epochs);
    AdamW opt(model.trainable_parameters(), cfg.adamw);

    std::ofstream csv;
    if (cfg.output_dir) {
        fs::create_directories(*cfg.output_dir);
        csv.open(*cfg.output_dir / "metrics.csv", std::ios::trunc);
        if (!csv) throw std::runtime_error("cannot write " + (*cfg.output_dir / "metrics.csv").string());
        csv.precision(17);
        csv << "epoch,loss,P,R,F1,IoU,OA\n";
    }

    History history;
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto order = shuffled(data.size(), derive_seed(cfg.seed, "epoch." + std::to_string(epoch)));
        const std::uint64_t aug_seed = derive_seed(cfg.seed, "augment." + std::to_string(epoch));
        EpochRecord record;
        record.epoch = epoch;
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
            std::vector<BitemporalSample> batch;
            for (std::size_t j = b * cfg.batch_size; j < std::min(data.size(), (b + 1) * cfg.batch_size); ++j) {
                const std::size_t i = order[j];
                batch.push_back(cfg.augment ? augment(data[i], derive_seed(aug_seed, static_cast<std::uint64_t>(i)),
                                                      cfg.augmentation)
                                            : data[i]);
            }
            const double lr = schedule.lr_at(step);
            opt.zero_grad();
            Tensor loss = batch_loss(model, batch, cfg.full_res_loss);
            const double value = loss.item();
            if (!std::isfinite(value)) {
                throw NumericError("non-finite loss " + std::to_string(value) + " at epoch " + std::to_string(epoch) +
                                   ", step " + std::to_string(step) + " (lr " + std::to_string(lr) + ")");
            }
            loss.backward();
            opt.step(lr);
            history.step_losses.push_back(value);
            loss_sum += value;
            record.lr = lr;
        }
        record.loss = loss_sum / static_cast<double>(per_epoch);
        if (cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs)) {
            record.metrics = compute(evaluate(model, data, cfg.batch_size));
        }
        history.epochs.push_back(record);
        if (csv.is_open()) {
            write_csv_row(csv, record);
            csv.flush();
            nlohmann::json manifest{{"config", cfg.run_config},
                                    {"epoch", epoch},
                                    {"step", step},
                                    {"seed", cfg.seed},
                                    {"loss", record.loss}};
            save_checkpoint(*cfg.output_dir / "checkpoint", model, manifest);
        }
        if (on_epoch) on_epoch(record);
    }
    return history;
}

std::vector<Mask> predict_masks(const TtpModel& model, const std::vector<BitemporalSample>& data,
                                std::size_t batch_size) {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
    NoGradGuard no_grad;
    std::vector<Mask> out;
    out.reserve(data.size());
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
        const Tensor logits = model.forward_logits(stack_images(data, idx, 0), stack_images(data, idx, 1));
        auto masks = logits_to_fullres_mask(logits, data[start].mask.height, data[start].mask.width);
        for (auto& m : masks) out.push_back(std::move(m));
    }
    return out;
}

ConfusionCounts evaluate(const TtpModel& model, const std::vector<BitemporalSample>& data, std::size_t batch_size) {
    if (data.empty()) throw DatasetError("evaluation set is empty");
    const auto preds = predict_masks(model, data, batch_size);
    ConfusionCounts counts;
    for (std::size_t i = 0; i < data.size(); ++i) counts = accumulate(preds[i], data[i].mask, counts);
    return counts;
}

void save_checkpoint(const fs::path& dir, const TtpModel& model, const nlohmann::json& manifest) {
    fs::create_directories(dir);
    const ParamSet params = model.parameters();
    // Write to temporaries first so a crash never leaves a half-written pair.
    const fs::path params_tmp = dir / (std::string(kParamsName) + ".tmp");
    const fs::path manifest_tmp = dir / (std::string(kManifestName) + ".tmp");
    save_params(params_tmp, params);
    nlohmann::json m = manifest;
    m["format"] = "ttp-checkpoint";
    m["version"] = 1;
    m["params"] = kParamsName;
    m["param_count"] = params.count();
    m["trainable_count"] = params.filter(true).count();
    {
        std::ofstream out(manifest_tmp);
        if (!out) throw std::runtime_error("cannot write " + manifest_tmp.string());
        out << m.dump(2) << '\n';
    }
    fs::rename(params_tmp, dir / kParamsName);
    fs::rename(manifest_tmp, dir / kManifestName);
}

CheckpointInfo read_checkpoint_manifest(const fs::path& dir) {
    const fs::path path = dir / kManifestName;
    std::ifstream in(path);
    if (!in) throw ParamMismatchError("missing checkpoint manifest " + path.string());
    CheckpointInfo info;
    try {
        info.manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParamMismatchError("unreadable checkpoint manifest " + path.string() + ": " + e.what());
    }
    if (info.manifest.value("format", "") != "ttp-checkpoint") {
        throw ParamMismatchError(path.string() + " is not a checkpoint manifest");
    }
    info.params_path = dir / info.manifest.value("params", kParamsName);
    return info;
}

void load_checkpoint(const fs::path& dir, TtpModel& model) {
    const auto info = read_checkpoint_manifest(dir);
    ParamSet params = model.parameters();
    load_params(info.params_path, params);
}

}  // namespace ttp
