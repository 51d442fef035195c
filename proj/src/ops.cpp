#include "ttp/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "ttp/kernels.hpp"

namespace ttp {

namespace {

using detail::Node;
using detail::TensorImpl;

std::size_t normalize_axis(int axis, std::size_t rank) {
    const int r = static_cast<int>(rank);
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) throw DimensionError("axis " + std::to_string(axis) + " invalid for rank " + std::to_string(rank));
    return static_cast<std::size_t>(a);
}

kernels::AxisLayout axis_layout(const Shape& shape, std::size_t axis) {
    kernels::AxisLayout l;
    for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
    l.len = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
    return l;
}

std::vector<std::size_t> row_major_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
    return strides;
}

/// For every element of `out`, the flat index of the element of `in` it reads
/// under broadcasting. `in` is right-aligned against `out`.
std::vector<std::size_t> broadcast_index(const Shape& in, const Shape& out) {
    const std::size_t rank = out.size();
    const std::size_t pad = rank - in.size();
    const auto in_strides = row_major_strides(in);
    std::vector<std::size_t> stride(rank, 0);
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i] != 1) stride[pad + i] = in_strides[i];
    }
    const std::size_t total = numel(out);
    std::vector<std::size_t> map(total);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t src = 0;
    for (std::size_t o = 0; o < total; ++o) {
        map[o] = src;
        for (std::size_t i = rank; i-- > 0;) {
            src += stride[i];
            if (++idx[i] < out[i]) break;
            src -= stride[i] * out[i];
            idx[i] = 0;
        }
    }
    return map;
}

/// Sums `grad` (laid out like the broadcast output) back onto the input.
std::vector<double> reduce_broadcast(std::span<const double> grad, const std::vector<std::size_t>& map,
                                     std::size_t in_size) {
    std::vector<double> out(in_size, 0.0);
    for (std::size_t o = 0; o < grad.size(); ++o) out[map[o]] += grad[o];
    return out;
}

enum class BinaryKind { Add, Sub, Mul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* name) {
    const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
    const std::size_t n = numel(out_shape);
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<double> out(n);
    const bool same = a.shape() == out_shape && b.shape() == out_shape;
    std::shared_ptr<const std::vector<std::size_t>> amap;
    std::shared_ptr<const std::vector<std::size_t>> bmap;
    if (!same) {
        amap = std::make_shared<const std::vector<std::size_t>>(broadcast_index(a.shape(), out_shape));
        bmap = std::make_shared<const std::vector<std::size_t>>(broadcast_index(b.shape(), out_shape));
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double x = same ? ad[i] : ad[(*amap)[i]];
        const double y = same ? bd[i] : bd[(*bmap)[i]];
        switch (kind) {
            case BinaryKind::Add: out[i] = x + y; break;
            case BinaryKind::Sub: out[i] = x - y; break;
            case BinaryKind::Mul: out[i] = x * y; break;
        }
    }
    return make_result(
        out_shape, std::move(out), {a, b},
        [kind, amap, bmap](const Node& node, const TensorImpl&, std::span<const double> g) {
            const Tensor& ta = node.inputs[0];
            const Tensor& tb = node.inputs[1];
            const std::size_t n = g.size();
            auto operand_grad = [&](const Tensor& self, const Tensor& other,
                                    const std::shared_ptr<const std::vector<std::size_t>>& self_map,
                                    const std::shared_ptr<const std::vector<std::size_t>>& other_map, double sign) {
                if (!self.requires_grad()) return;
                std::vector<double> full(n);
                if (kind == BinaryKind::Mul) {
                    const auto od = other.data();
                    for (std::size_t i = 0; i < n; ++i) full[i] = g[i] * (other_map ? od[(*other_map)[i]] : od[i]);
                } else {
                    for (std::size_t i = 0; i < n; ++i) full[i] = sign * g[i];
                }
                if (self_map) {
                    accumulate_grad(self, reduce_broadcast(full, *self_map, self.numel()));
                } else {
                    accumulate_grad(self, full);
                }
            };
            operand_grad(ta, tb, amap, bmap, 1.0);
            operand_grad(tb, ta, bmap, amap, kind == BinaryKind::Sub ? -1.0 : 1.0);
        },
        name);
}

/// Shared implementation of matmul / matmul_nt.
Tensor matmul_impl(const Tensor& a, const Tensor& b, bool trans_b) {
    if (a.dim() < 2 || b.dim() < 2) {
        throw DimensionError("matmul needs rank >= 2 operands, got " + to_string(a.shape()) + " and " +
                             to_string(b.shape()));
    }
    const std::size_t m = a.shape()[a.dim() - 2];
    const std::size_t k = a.shape()[a.dim() - 1];
    const std::size_t bk = trans_b ? b.shape()[b.dim() - 1] : b.shape()[b.dim() - 2];
    const std::size_t p = trans_b ? b.shape()[b.dim() - 2] : b.shape()[b.dim() - 1];
    if (k != bk) {
        throw DimensionError("matmul inner dimension mismatch: " + to_string(a.shape()) + (trans_b ? " x T" : " x ") +
                             to_string(b.shape()));
    }

    // A plain 2-D right operand folds all leading axes of `a` into rows.
    if (b.dim() == 2) {
        const std::size_t rows = a.numel() / k;
        Shape out_shape(a.shape().begin(), a.shape().end() - 1);
        out_shape.push_back(p);
        std::vector<double> out(rows * p);
        const std::size_t zero = 0;
        kernels::gemm({false, trans_b, rows, p, k}, 1, a.data().data(), {&zero, 1}, b.data().data(), {&zero, 1},
                      out.data());
        return make_result(
            out_shape, std::move(out), {a, b},
            [rows, k, p, trans_b](const Node& node, const TensorImpl&, std::span<const double> g) {
                const Tensor& ta = node.inputs[0];
                const Tensor& tb = node.inputs[1];
                const std::size_t zero = 0;
                if (ta.requires_grad()) {
                    // dA = G * B^T  (or G * B when B was used transposed)
                    std::vector<double> ga(rows * k);
                    kernels::gemm({false, !trans_b, rows, k, p}, 1, g.data(), {&zero, 1}, tb.data().data(),
                                  {&zero, 1}, ga.data());
                    accumulate_grad(ta, ga);
                }
                if (tb.requires_grad()) {
                    std::vector<double> gb(k * p);
                    if (trans_b) {
                        // dB = G^T * A, shaped (p, k)
                        kernels::gemm({true, false, p, k, rows}, 1, g.data(), {&zero, 1}, ta.data().data(),
                                      {&zero, 1}, gb.data());
                    } else {
                        kernels::gemm({true, false, k, p, rows}, 1, ta.data().data(), {&zero, 1}, g.data(),
                                      {&zero, 1}, gb.data());
                    }
                    accumulate_grad(tb, gb);
                }
            },
            trans_b ? "matmul_nt" : "matmul");
    }

    const Shape a_batch(a.shape().begin(), a.shape().end() - 2);
    const Shape b_batch(b.shape().begin(), b.shape().end() - 2);
    const Shape out_batch = broadcast_shapes(a_batch, b_batch);
    const std::size_t batch = numel(out_batch);
    auto a_map = broadcast_index(a_batch.empty() ? Shape{1} : a_batch, out_batch.empty() ? Shape{1} : out_batch);
    auto b_map = broadcast_index(b_batch.empty() ? Shape{1} : b_batch, out_batch.empty() ? Shape{1} : out_batch);
    auto a_off = std::make_shared<std::vector<std::size_t>>(batch);
    auto b_off = std::make_shared<std::vector<std::size_t>>(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        (*a_off)[i] = a_map[i] * m * k;
        (*b_off)[i] = b_map[i] * k * p;
    }
    Shape out_shape = out_batch;
    out_shape.push_back(m);
    out_shape.push_back(p);
    std::vector<double> out(batch * m * p);
    kernels::gemm({false, trans_b, m, p, k}, batch, a.data().data(), *a_off, b.data().data(), *b_off, out.data());

    return make_result(
        out_shape, std::move(out), {a, b},
        [batch, m, k, p, trans_b, a_off, b_off](const Node& node, const TensorImpl&, std::span<const double> g) {
            const Tensor& ta = node.inputs[0];
            const Tensor& tb = node.inputs[1];
            std::vector<std::size_t> g_off(batch);
            for (std::size_t i = 0; i < batch; ++i) g_off[i] = i * m * p;
            if (ta.requires_grad()) {
                std::vector<double> full(batch * m * k);
                kernels::gemm({false, !trans_b, m, k, p}, batch, g.data(), g_off, tb.data().data(), *b_off,
                              full.data());
                std::vector<double> ga(ta.numel(), 0.0);
                for (std::size_t i = 0; i < batch; ++i) {
                    for (std::size_t j = 0; j < m * k; ++j) ga[(*a_off)[i] + j] += full[i * m * k + j];
                }
                accumulate_grad(ta, ga);
            }
            if (tb.requires_grad()) {
                std::vector<double> full(batch * k * p);
                std::vector<std::size_t> a_offsets(*a_off);
                if (trans_b) {
                    kernels::gemm({true, false, p, k, m}, batch, g.data(), g_off, ta.data().data(), a_offsets,
                                  full.data());
                } else {
                    kernels::gemm({true, false, k, p, m}, batch, ta.data().data(), a_offsets, g.data(), g_off,
                                  full.data());
                }
                std::vector<double> gb(tb.numel(), 0.0);
                for (std::size_t i = 0; i < batch; ++i) {
                    for (std::size_t j = 0; j < k * p; ++j) gb[(*b_off)[i] + j] += full[i * k * p + j];
                }
                accumulate_grad(tb, gb);
            }
        },
        trans_b ? "matmul_nt" : "matmul");
}

void require_4d(const Tensor& x, const char* op) {
    if (x.dim() != 4) throw DimensionError(std::string(op) + " expects (b,c,h,w), got " + to_string(x.shape()));
}

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw DimensionError("shapes " + to_string(a) + " and " + to_string(b) + " are not broadcastable");
        }
        out[i] = std::max(da, db);
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Mul, "mul"); }

Tensor scale(const Tensor& x, double factor) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) v *= factor;
    return make_result(
        x.shape(), std::move(out), {x},
        [factor](const Node& node, const TensorImpl&, std::span<const double> g) {
            std::vector<double> gx(g.begin(), g.end());
            for (auto& v : gx) v *= factor;
            accumulate_grad(node.inputs[0], gx);
        },
        "scale");
}

Tensor add_scalar(const Tensor& x, double value) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) v += value;
    return make_result(
        x.shape(), std::move(out), {x},
        [](const Node& node, const TensorImpl&, std::span<const double> g) { accumulate_grad(node.inputs[0], g); },
        "add_scalar");
}

Tensor matmul(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, false); }
Tensor matmul_nt(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, true); }

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (weight.dim() != 2) throw DimensionError("linear weight must be 2-D, got " + to_string(weight.shape()));
    Tensor y = matmul_nt(x, weight);
    return bias.defined() ? add(y, bias) : y;
}

Tensor channel_linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_4d(x, "channel_linear");
    const auto& s = x.shape();
    if (weight.dim() != 2 || weight.shape()[1] != s[1]) {
        throw DimensionError("channel_linear weight " + to_string(weight.shape()) + " does not match input " +
                             to_string(s));
    }
    const std::size_t co = weight.shape()[0];
    Tensor flat = reshape(x, {s[0], s[1], s[2] * s[3]});
    Tensor y = matmul(weight, flat);
    if (bias.defined()) y = add(y, reshape(bias, {co, 1}));
    return reshape(y, {s[0], co, s[2], s[3]});
}

Tensor softmax(const Tensor& x, int axis) {
    const std::size_t ax = normalize_axis(axis, x.dim());
    const auto layout = axis_layout(x.shape(), ax);
    std::vector<double> out(x.numel());
    kernels::softmax_forward(layout, x.data().data(), out.data());
    return make_result(
        x.shape(), std::move(out), {x},
        [layout](const Node& node, const TensorImpl& self, std::span<const double> g) {
            std::vector<double> gx(g.size());
            kernels::softmax_backward(layout, self.data.data(), g.data(), gx.data());
            accumulate_grad(node.inputs[0], gx);
        },
        "softmax");
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.numel());
    kernels::sigmoid_forward(x.numel(), x.data().data(), out.data());
    return make_result(
        x.shape(), std::move(out), {x},
        [](const Node& node, const TensorImpl& self, std::span<const double> g) {
            std::vector<double> gx(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * self.data[i] * (1.0 - self.data[i]);
            accumulate_grad(node.inputs[0], gx);
        },
        "sigmoid");
}

Tensor gelu(const Tensor& x) {
    std::vector<double> out(x.numel());
    kernels::gelu_forward(x.numel(), x.data().data(), out.data());
    return make_result(
        x.shape(), std::move(out), {x},
        [](const Node& node, const TensorImpl&, std::span<const double> g) {
            const Tensor& in = node.inputs[0];
            std::vector<double> gx(g.size());
            kernels::gelu_backward(g.size(), in.data().data(), g.data(), gx.data());
            accumulate_grad(in, gx);
        },
        "gelu");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
    if (x.dim() < 1) throw DimensionError("layer_norm on a rank-0 tensor");
    const std::size_t d = x.shape().back();
    if (gain.numel() != d || bias.numel() != d) {
        throw DimensionError("layer_norm params " + to_string(gain.shape()) + "/" + to_string(bias.shape()) +
                             " do not match feature dim " + std::to_string(d));
    }
    const std::size_t rows = x.numel() / d;
    std::vector<double> out(x.numel());
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto rstd = std::make_shared<std::vector<double>>(rows);
    kernels::layer_norm_forward(rows, d, kLayerNormEps, x.data().data(), gain.data().data(), bias.data().data(),
                                out.data(), xhat->data(), rstd->data());
    return make_result(
        x.shape(), std::move(out), {x, gain, bias},
        [rows, d, xhat, rstd](const Node& node, const TensorImpl&, std::span<const double> g) {
            std::vector<double> gx(rows * d);
            std::vector<double> ggain(d);
            std::vector<double> gbias(d);
            kernels::layer_norm_backward(rows, d, xhat->data(), rstd->data(), node.inputs[1].data().data(), g.data(),
                                         gx.data(), ggain.data(), gbias.data());
            accumulate_grad(node.inputs[0], gx);
            accumulate_grad(node.inputs[1], ggain);
            accumulate_grad(node.inputs[2], gbias);
        },
        "layer_norm");
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw DimensionError("concat of zero tensors");
    const Shape& first = parts.front().shape();
    const std::size_t ax = normalize_axis(axis, first.size());
    Shape out_shape = first;
    out_shape[ax] = 0;
    std::vector<std::size_t> lens;
    for (const auto& t : parts) {
        const Shape& s = t.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == ax || s[i] == first[i];
        if (!ok) throw DimensionError("concat: " + to_string(s) + " does not match " + to_string(first) + " off axis");
        out_shape[ax] += s[ax];
        lens.push_back(s[ax]);
    }
    const auto layout = axis_layout(out_shape, ax);
    std::vector<double> out(numel(out_shape));
    std::size_t offset = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const auto src = parts[pi].data();
        const std::size_t chunk = lens[pi] * layout.inner;
        for (std::size_t o = 0; o < layout.outer; ++o) {
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                        out.begin() + static_cast<std::ptrdiff_t>(o * layout.len * layout.inner + offset));
        }
        offset += chunk;
    }
    return make_result(
        out_shape, std::move(out), parts,
        [layout, lens](const Node& node, const TensorImpl&, std::span<const double> g) {
            std::size_t offset = 0;
            for (std::size_t pi = 0; pi < lens.size(); ++pi) {
                const std::size_t chunk = lens[pi] * layout.inner;
                if (node.inputs[pi].requires_grad()) {
                    std::vector<double> gp(layout.outer * chunk);
                    for (std::size_t o = 0; o < layout.outer; ++o) {
                        std::copy_n(g.begin() + static_cast<std::ptrdiff_t>(o * layout.len * layout.inner + offset),
                                    chunk, gp.begin() + static_cast<std::ptrdiff_t>(o * chunk));
                    }
                    accumulate_grad(node.inputs[pi], gp);
                }
                offset += chunk;
            }
        },
        "concat");
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
    const std::size_t ax = normalize_axis(axis, x.dim());
    if (length == 0 || start + length > x.shape()[ax]) {
        throw DimensionError("slice [" + std::to_string(start) + ", +" + std::to_string(length) + ") out of range for " +
                             to_string(x.shape()));
    }
    const auto layout = axis_layout(x.shape(), ax);
    Shape out_shape = x.shape();
    out_shape[ax] = length;
    const std::size_t chunk = length * layout.inner;
    const std::size_t skip = start * layout.inner;
    std::vector<double> out(layout.outer * chunk);
    const auto src = x.data();
    for (std::size_t o = 0; o < layout.outer; ++o) {
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * layout.len * layout.inner + skip), chunk,
                    out.begin() + static_cast<std::ptrdiff_t>(o * chunk));
    }
    return make_result(
        out_shape, std::move(out), {x},
        [layout, chunk, skip](const Node& node, const TensorImpl&, std::span<const double> g) {
            std::vector<double> gx(layout.outer * layout.len * layout.inner, 0.0);
            for (std::size_t o = 0; o < layout.outer; ++o) {
                std::copy_n(g.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                            gx.begin() + static_cast<std::ptrdiff_t>(o * layout.len * layout.inner + skip));
            }
            accumulate_grad(node.inputs[0], gx);
        },
        "slice");
}

std::vector<Tensor> split(const Tensor& x, int axis, const std::vector<std::size_t>& sizes) {
    const std::size_t ax = normalize_axis(axis, x.dim());
    if (std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) != x.shape()[ax]) {
        throw DimensionError("split sizes do not sum to axis length of " + to_string(x.shape()));
    }
    std::vector<Tensor> out;
    std::size_t start = 0;
    for (auto s : sizes) {
        out.push_back(slice(x, axis, start, s));
        start += s;
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.numel()) {
        throw DimensionError("cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    return make_result(
        std::move(shape), std::move(out), {x},
        [](const Node& node, const TensorImpl&, std::span<const double> g) { accumulate_grad(node.inputs[0], g); },
        "reshape");
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
    const std::size_t rank = x.dim();
    if (order.size() != rank) throw DimensionError("permute order rank mismatch for " + to_string(x.shape()));
    std::vector<bool> used(rank, false);
    for (auto o : order) {
        if (o >= rank || used[o]) throw DimensionError("permute order is not a permutation");
        used[o] = true;
    }
    Shape out_shape(rank);
    for (std::size_t i = 0; i < rank; ++i) out_shape[i] = x.shape()[order[i]];
    std::vector<double> out(x.numel());
    kernels::permute(x.shape(), order, x.data().data(), out.data());
    std::vector<std::size_t> inverse(rank);
    for (std::size_t i = 0; i < rank; ++i) inverse[order[i]] = i;
    return make_result(
        out_shape, std::move(out), {x},
        [out_shape, inverse](const Node& node, const TensorImpl&, std::span<const double> g) {
            std::vector<double> gx(g.size());
            kernels::permute(out_shape, inverse, g.data(), gx.data());
            accumulate_grad(node.inputs[0], gx);
        },
        "permute");
}

Tensor conv2d_transpose(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride) {
    require_4d(x, "conv2d_transpose");
    if (stride != 2 && stride != 4) throw DimensionError("conv2d_transpose stride must be 2 or 4");
    const auto& ks = kernel.shape();
    if (ks.size() != 4 || ks[0] != x.shape()[1] || ks[2] != stride || ks[3] != stride) {
        throw DimensionError("conv2d_transpose kernel " + to_string(ks) + " does not match input " +
                             to_string(x.shape()) + " with stride " + std::to_string(stride));
    }
    kernels::ConvTranspose c{x.shape()[0], x.shape()[1], ks[1], x.shape()[2], x.shape()[3], stride};
    if (bias.defined() && bias.numel() != c.out_channels) {
        throw DimensionError("conv2d_transpose bias " + to_string(bias.shape()) + " does not match " +
                             std::to_string(c.out_channels) + " output channels");
    }
    std::vector<double> out(c.batch * c.out_channels * c.height * stride * c.width * stride);
    kernels::conv_transpose_forward(c, x.data().data(), kernel.data().data(),
                                    bias.defined() ? bias.data().data() : nullptr, out.data());
    std::vector<Tensor> inputs{x, kernel};
    if (bias.defined()) inputs.push_back(bias);
    return make_result(
        {c.batch, c.out_channels, c.height * stride, c.width * stride}, std::move(out), std::move(inputs),
        [c](const Node& node, const TensorImpl&, std::span<const double> g) {
            const Tensor& tx = node.inputs[0];
            const Tensor& tk = node.inputs[1];
            const bool has_bias = node.inputs.size() > 2;
            std::vector<double> gx(tx.requires_grad() ? tx.numel() : 0);
            std::vector<double> gk(tk.requires_grad() ? tk.numel() : 0);
            std::vector<double> gb(has_bias && node.inputs[2].requires_grad() ? c.out_channels : 0);
            kernels::conv_transpose_backward(c, tx.data().data(), tk.data().data(), g.data(),
                                             gx.empty() ? nullptr : gx.data(), gk.empty() ? nullptr : gk.data(),
                                             gb.empty() ? nullptr : gb.data());
            if (!gx.empty()) accumulate_grad(tx, gx);
            if (!gk.empty()) accumulate_grad(tk, gk);
            if (!gb.empty()) accumulate_grad(node.inputs[2], gb);
        },
        "conv2d_transpose");
}

Tensor max_pool2d(const Tensor& x, std::size_t window, std::size_t stride) {
    require_4d(x, "max_pool2d");
    if (window != stride || window == 0) throw DimensionError("max_pool2d requires window == stride");
    const auto& s = x.shape();
    if (s[2] % stride != 0 || s[3] % stride != 0) {
        throw DimensionError("max_pool2d: spatial dims of " + to_string(s) + " not divisible by " +
                             std::to_string(stride));
    }
    kernels::Planes p{s[0] * s[1], s[2], s[3], s[2] / stride, s[3] / stride};
    std::vector<double> out(p.count * p.out_h * p.out_w);
    auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
    kernels::max_pool_forward(p, window, x.data().data(), out.data(), arg->data());
    return make_result(
        {s[0], s[1], p.out_h, p.out_w}, std::move(out), {x},
        [p, arg](const Node& node, const TensorImpl&, std::span<const double> g) {
            std::vector<double> gx(p.count * p.in_h * p.in_w);
            kernels::max_pool_backward(p, arg->data(), g.data(), gx.data());
            accumulate_grad(node.inputs[0], gx);
        },
        "max_pool2d");
}

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    require_4d(x, "bilinear_resize");
    if (out_h == 0 || out_w == 0) throw DimensionError("bilinear_resize output dims must be positive");
    const auto& s = x.shape();
    kernels::Planes p{s[0] * s[1], s[2], s[3], out_h, out_w};
    std::vector<double> out(p.count * out_h * out_w);
    kernels::bilinear_forward(p, x.data().data(), out.data());
    return make_result(
        {s[0], s[1], out_h, out_w}, std::move(out), {x},
        [p](const Node& node, const TensorImpl&, std::span<const double> g) {
            std::vector<double> gx(p.count * p.in_h * p.in_w);
            kernels::bilinear_backward(p, g.data(), gx.data());
            accumulate_grad(node.inputs[0], gx);
        },
        "bilinear_resize");
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    return make_result(
        {1}, {s}, {x},
        [](const Node& node, const TensorImpl&, std::span<const double> g) {
            accumulate_grad(node.inputs[0], std::vector<double>(node.inputs[0].numel(), g[0]));
        },
        "sum");
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor bce_loss(const Tensor& p, const Tensor& y) {
    if (p.shape() != y.shape()) {
        throw DimensionError("bce_loss shape mismatch: " + to_string(p.shape()) + " vs " + to_string(y.shape()));
    }
    const std::size_t n = p.numel();
    const auto pd = p.data();
    const auto yd = y.data();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double pc = std::clamp(pd[i], kBceClamp, 1.0 - kBceClamp);
        total += -(yd[i] * std::log(pc) + (1.0 - yd[i]) * std::log(1.0 - pc));
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    return make_result(
        {1}, {total * inv_n}, {p, y},
        [inv_n](const Node& node, const TensorImpl&, std::span<const double> g) {
            const Tensor& tp = node.inputs[0];
            const Tensor& ty = node.inputs[1];
            const auto pd = tp.data();
            const auto yd = ty.data();
            const std::size_t n = pd.size();
            if (tp.requires_grad()) {
                std::vector<double> gp(n, 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                    if (pd[i] < kBceClamp || pd[i] > 1.0 - kBceClamp) continue;
                    gp[i] = g[0] * inv_n * (-yd[i] / pd[i] + (1.0 - yd[i]) / (1.0 - pd[i]));
                }
                accumulate_grad(tp, gp);
            }
            if (ty.requires_grad()) {
                std::vector<double> gy(n);
                for (std::size_t i = 0; i < n; ++i) {
                    const double pc = std::clamp(pd[i], kBceClamp, 1.0 - kBceClamp);
                    gy[i] = -g[0] * inv_n * (std::log(pc) - std::log(1.0 - pc));
                }
                accumulate_grad(ty, gy);
            }
        },
        "bce_loss");
}

}  // namespace ttp
