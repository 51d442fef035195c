#include "ttp/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ttp {

AdamW::AdamW(ParamSet params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_.entries()) {
        m_.emplace_back(p.tensor.numel(), 0.0);
        v_.emplace_back(p.tensor.numel(), 0.0);
    }
}

void AdamW::step(double lr) {
    for (const auto& p : params_.entries()) {
        if (!p.tensor.has_grad()) throw std::logic_error("AdamW: parameter " + p.name + " has no gradient");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& entry = params_.entries()[i];
        auto values = entry.tensor.mutable_data();
        const auto grad = entry.tensor.grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < values.size(); ++j) {
            values[j] -= lr * cfg_.weight_decay * values[j];
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * grad[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * grad[j] * grad[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            values[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_.entries()) p.tensor.zero_grad();
}

WarmupCosine WarmupCosine::standard(std::size_t total_steps, double base_lr) {
    if (total_steps == 0) throw std::invalid_argument("schedule needs at least one step");
    WarmupCosine s;
    s.base_lr = base_lr;
    s.min_lr = base_lr / 100.0;
    s.total_steps = total_steps;
    s.warmup_steps = static_cast<std::size_t>(0.05 * static_cast<double>(total_steps));
    return s;
}

double WarmupCosine::lr_at(std::size_t step) const {
    if (warmup_steps >= total_steps) throw std::invalid_argument("warmup_steps must be below total_steps");
    if (step >= total_steps) {
        throw std::out_of_range("step " + std::to_string(step) + " outside schedule of " +
                                std::to_string(total_steps) + " steps");
    }
    if (step < warmup_steps) {
        return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    }
    // The last step lands exactly on min_lr.
    const std::size_t span = std::max<std::size_t>(total_steps - 1 - warmup_steps, 1);
    const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(span);
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace ttp
