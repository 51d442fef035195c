#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "ttp/config.hpp"
#include "ttp/metrics.hpp"

namespace ttp {

struct AblationVariant {
    std::string name;
    AblationFlags flags;
};

/// Full model first, then progressively stripped: no gates, no pyramid, no adapters.
std::vector<AblationVariant> ablation_variants();

struct AblationRun {
    std::string variant;
    std::uint64_t seed = 0;
    std::size_t trainable = 0;
    double final_loss = 0;
    MetricReport metrics;
};

struct AblationRow {
    AblationVariant variant;
    std::size_t trainable = 0;
    MetricReport median;  // per-metric median over seeds
};

struct AblationReport {
    std::vector<AblationRun> runs;
    std::vector<AblationRow> rows;
};

/// Trains every variant for cfg.n_seeds seeds (cfg.seed, cfg.seed + 1, ...)
/// on the training split and scores it on the eval split. Nothing is written
/// to disk; the per-run output_dir is ignored.
AblationReport run_ablation(const RunConfig& cfg, const std::function<void(const AblationRun&)>& on_run = {});

double median(std::vector<double> values);

void write_ablation_runs_csv(std::ostream& out, const AblationReport& report);
void write_ablation_markdown(std::ostream& out, const AblationReport& report);

}  // namespace ttp
