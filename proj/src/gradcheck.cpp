#include "ttp/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ttp {

Tensor finite_diff_grad(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
    NoGradGuard no_grad;
    std::vector<double> base(x.data().begin(), x.data().end());
    std::vector<double> grad(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        auto plus = base;
        auto minus = base;
        plus[i] += h;
        minus[i] -= h;
        const double fp = f(Tensor::from(x.shape(), std::move(plus))).item();
        const double fm = f(Tensor::from(x.shape(), std::move(minus))).item();
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return Tensor::from(x.shape(), std::move(grad));
}

std::vector<double> finite_diff_param_grad(const std::function<double()>& f, Tensor& param, double h) {
    NoGradGuard no_grad;
    auto values = param.mutable_data();
    std::vector<double> grad(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double original = values[i];
        values[i] = original + h;
        const double fp = f();
        values[i] = original - h;
        const double fm = f();
        values[i] = original;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
    double diff = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(std::max(na, nb));
    return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

}  // namespace ttp
