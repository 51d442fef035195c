#include "ttp/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace ttp {

namespace {

std::atomic<std::uint64_t> g_node_counter{0};
thread_local bool g_grad_enabled = true;

}  // namespace

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = ttp::numel(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    for (auto d : shape) {
        if (d == 0) throw DimensionError("tensor dims must be positive, got " + to_string(shape));
    }
    if (values.size() != ttp::numel(shape)) {
        throw DimensionError("value count " + std::to_string(values.size()) + " does not match shape " +
                             to_string(shape));
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::size(int axis) const {
    const auto n = static_cast<int>(dim());
    const int a = axis < 0 ? axis + n : axis;
    if (a < 0 || a >= n) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
    return impl_->shape[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<const double> Tensor::data() const { return impl_->data; }

std::span<double> Tensor::mutable_data() {
    if (impl_->grad_fn) throw std::logic_error("mutable_data() on a non-leaf tensor");
    return impl_->data;
}

double Tensor::item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape()));
    return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    if (index.size() != dim()) throw DimensionError("index rank mismatch for " + to_string(shape()));
    std::size_t offset = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= impl_->shape[axis]) throw DimensionError("index out of range for " + to_string(shape()));
        offset = offset * impl_->shape[axis] + i;
        ++axis;
    }
    return impl_->data[offset];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
    if (impl_->grad_fn) throw std::logic_error("set_requires_grad() on a non-leaf tensor");
    impl_->requires_grad = flag;
    if (!flag) impl_->grad.clear();
}

bool Tensor::is_leaf() const { return !impl_->grad_fn; }

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const { return from(impl_->shape, impl_->data, false); }

void Tensor::backward() const {
    if (numel() != 1) throw DimensionError("backward() requires a scalar, got " + to_string(shape()));
    if (!impl_->requires_grad) throw std::logic_error("backward() on a tensor that does not track gradients");

    // Collect every interior tensor reachable from the loss.
    std::vector<detail::TensorImpl*> interior;
    std::unordered_set<detail::TensorImpl*> seen;
    std::vector<detail::TensorImpl*> stack{impl_.get()};
    while (!stack.empty()) {
        auto* t = stack.back();
        stack.pop_back();
        if (!t->grad_fn || !seen.insert(t).second) continue;
        interior.push_back(t);
        for (const auto& in : t->grad_fn->inputs) {
            if (in.impl()->grad_fn) stack.push_back(in.impl());
        }
    }
    std::sort(interior.begin(), interior.end(),
              [](const auto* a, const auto* b) { return a->grad_fn->seq > b->grad_fn->seq; });

    const double one = 1.0;
    accumulate_grad(*this, std::span<const double>(&one, 1));
    for (auto* t : interior) {
        if (!t->grad.empty()) t->grad_fn->backward(*t->grad_fn, *t, t->grad);
    }
    // Detach everything first; releasing a node can free tensors still in the list.
    std::vector<std::shared_ptr<detail::Node>> release;
    release.reserve(interior.size());
    for (auto* t : interior) {
        t->grad.clear();
        t->grad.shrink_to_fit();
        release.push_back(std::move(t->grad_fn));
    }
}

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   detail::Node::BackwardFn backward, const char* name) {
    Tensor out = Tensor::from(std::move(shape), std::move(values), false);
    if (!g_grad_enabled) return out;
    const bool tracked = std::any_of(inputs.begin(), inputs.end(),
                                     [](const Tensor& t) { return t.defined() && t.requires_grad(); });
    if (!tracked) return out;
    auto node = std::make_shared<detail::Node>();
    node->seq = g_node_counter.fetch_add(1, std::memory_order_relaxed);
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    node->name = name;
    out.impl_->requires_grad = true;
    out.impl_->grad_fn = std::move(node);
    return out;
}

void accumulate_grad(const Tensor& t, std::span<const double> g) {
    auto* impl = t.impl();
    if (!impl || !impl->requires_grad) return;
    if (g.size() != impl->data.size()) {
        throw DimensionError("gradient size " + std::to_string(g.size()) + " does not match " + to_string(impl->shape));
    }
    if (impl->grad.empty()) {
        impl->grad.assign(g.begin(), g.end());
        return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) impl->grad[i] += g[i];
}

}  // namespace ttp
