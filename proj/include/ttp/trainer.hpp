#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "ttp/data.hpp"
#include "ttp/metrics.hpp"
#include "ttp/model.hpp"
#include "ttp/optim.hpp"

namespace ttp {

/// Non-finite loss or parameters during training.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    std::size_t batch_size = 8;
    std::size_t max_epochs = 300;
    double base_lr = 4e-4;
    /// Defaults to 5% of the run.
    std::optional<std::size_t> warmup_steps;
    /// Defaults to base_lr / 100.
    std::optional<double> min_lr;
    AdamWConfig adamw;
    bool augment = true;
    AugmentConfig augmentation;
    /// Supervise at the head's output size (default) or at input size.
    bool full_res_loss = false;
    std::uint64_t seed = 0;
    /// Training-set metrics every n epochs (0 = never; the last epoch is always evaluated when n > 0).
    std::size_t eval_every = 1;
    /// When set, receives metrics.csv and checkpoint/.
    std::optional<std::filesystem::path> output_dir;
    /// Stored in the checkpoint manifest under "config".
    nlohmann::json run_config = nlohmann::json::object();

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double loss = 0;        // mean over the epoch's steps
    double lr = 0;          // at the last step
    std::optional<MetricReport> metrics;
};

struct History {
    std::vector<EpochRecord> epochs;
    std::vector<double> step_losses;
};

std::size_t batches_per_epoch(std::size_t samples, std::size_t batch_size);
WarmupCosine make_schedule(const TrainConfig& cfg, std::size_t total_steps);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Seeded loop: shuffle, augment, forward, BCE, backward, AdamW with the
/// warmup-cosine schedule. Throws DatasetError on empty data and NumericError
/// on a non-finite loss.
History train(TtpModel& model, const TrainConfig& cfg, const std::vector<BitemporalSample>& data,
              const EpochCallback& on_epoch = {});

/// Full-resolution confusion counts of thresholded predictions.
ConfusionCounts evaluate(const TtpModel& model, const std::vector<BitemporalSample>& data, std::size_t batch_size = 8);
std::vector<Mask> predict_masks(const TtpModel& model, const std::vector<BitemporalSample>& data,
                                std::size_t batch_size = 8);

// Checkpoint directory: params.bin (see params.hpp) + manifest.json.
struct CheckpointInfo {
    nlohmann::json manifest;
    std::filesystem::path params_path;
};

void save_checkpoint(const std::filesystem::path& dir, const TtpModel& model, const nlohmann::json& manifest);
CheckpointInfo read_checkpoint_manifest(const std::filesystem::path& dir);
/// Loads parameter values into `model`; ParamMismatchError if they do not fit.
void load_checkpoint(const std::filesystem::path& dir, TtpModel& model);

}  // namespace ttp
