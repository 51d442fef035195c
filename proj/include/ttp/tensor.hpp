#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ttp {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Raised when operand shapes are incompatible with an op.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class Tensor;

namespace detail {

struct TensorImpl;

/// One recorded op. `seq` is the global execution counter, so sorting nodes by
/// descending `seq` replays the graph in exact reverse execution order.
struct Node {
    using BackwardFn = std::function<void(const Node& node, const TensorImpl& out, std::span<const double> grad_out)>;

    std::uint64_t seq = 0;
    std::vector<Tensor> inputs;
    BackwardFn backward;
    const char* name = "";
};

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty means absent
    bool requires_grad = false;
    std::shared_ptr<Node> grad_fn;
};

}  // namespace detail

/// Row-major float64 tensor with optional reverse-mode gradient tracking.
///
/// Tensors are shared handles; ops never mutate their inputs. Leaf tensors with
/// `requires_grad` accumulate gradients across `backward()` calls until
/// `zero_grad()`.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t dim() const { return shape().size(); }
    std::size_t size(int axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    /// Mutable access for parameter updates and test setup. Only valid on leaves.
    std::span<double> mutable_data();
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool is_leaf() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    /// Same values, detached from the graph, with independent storage.
    Tensor detach() const;
    Tensor clone() const { return detach(); }

    /// Reverse-mode sweep from a scalar. Interior gradients and graph nodes are
    /// released afterwards; leaf gradients accumulate.
    void backward() const;

    detail::TensorImpl* impl() const { return impl_.get(); }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;

    friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>, detail::Node::BackwardFn, const char*);
};

/// Creates an op output. A graph node is attached only when grad mode is on and
/// at least one input tracks gradients.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   detail::Node::BackwardFn backward, const char* name);

/// Adds `g` into the gradient buffer of `t` when it tracks gradients.
void accumulate_grad(const Tensor& t, std::span<const double> g);

bool grad_enabled();

/// Disables graph recording in the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

}  // namespace ttp
