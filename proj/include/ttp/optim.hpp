#pragma once

#include <cstdint>
#include <vector>

#include "ttp/params.hpp"

namespace ttp {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay (p <- p - lr*wd*p before the moment step).
class AdamW {
public:
    AdamW(ParamSet params, AdamWConfig cfg = {});

    /// Applies one update with learning rate `lr`. Every parameter must hold a gradient.
    void step(double lr);
    void zero_grad();

    std::uint64_t steps() const { return step_; }
    const AdamWConfig& config() const { return cfg_; }
    const ParamSet& params() const { return params_; }
    std::span<const double> first_moment(std::size_t i) const { return m_[i]; }
    std::span<const double> second_moment(std::size_t i) const { return v_[i]; }

private:
    ParamSet params_;
    AdamWConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::uint64_t step_ = 0;
};

/// Linear warmup followed by cosine annealing down to `min_lr`, reached at
/// step total_steps - 1.
struct WarmupCosine {
    double base_lr = 4e-4;
    double min_lr = 4e-6;
    std::size_t warmup_steps = 0;
    std::size_t total_steps = 1;

    /// Warmup = 5% of the run, floor = base / 100.
    static WarmupCosine standard(std::size_t total_steps, double base_lr = 4e-4);

    double lr_at(std::size_t step) const;
};

}  // namespace ttp
