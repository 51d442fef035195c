#pragma once

#include <functional>
#include <vector>

#include "ttp/tensor.hpp"

namespace ttp {

/// Central-difference gradient of a scalar function at `x`.
Tensor finite_diff_grad(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

/// Central differences of `f()` with respect to the values of `param`, which is
/// perturbed in place and restored afterwards. Used for parameters buried
/// inside a model.
std::vector<double> finite_diff_param_grad(const std::function<double()>& f, Tensor& param, double h = 1e-5);

/// ||a - b|| / max(||a||, ||b||), or 0 when both are exactly zero.
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace ttp
