#pragma once

#include <vector>

#include "ttp/tensor.hpp"

namespace ttp {

// Elementwise with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

/// Batched matrix product over the last two axes; leading axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T over the last two axes.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

/// x[..., in] * W^T + bias, with W shaped (out, in). `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Per-pixel channel mixing of x[b, c_in, h, w] with W (c_out, c_in).
Tensor channel_linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor softmax(const Tensor& x, int axis);
Tensor sigmoid(const Tensor& x);
/// tanh approximation.
Tensor gelu(const Tensor& x);

/// Normalizes over the last axis with eps = 1e-5, then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);
inline constexpr double kLayerNormEps = 1e-5;

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);
std::vector<Tensor> split(const Tensor& x, int axis, const std::vector<std::size_t>& sizes);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);

/// x[b, c_in, h, w] with kernel (c_in, c_out, s, s), stride s in {2, 4}.
Tensor conv2d_transpose(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride);
/// Non-overlapping 2x2 max pooling; ties route to the first row-major maximum.
Tensor max_pool2d(const Tensor& x, std::size_t window = 2, std::size_t stride = 2);
/// align_corners=false bilinear resampling of x[b, c, h, w].
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Mean binary cross-entropy; p is clamped to [1e-7, 1 - 1e-7].
Tensor bce_loss(const Tensor& p, const Tensor& y);
inline constexpr double kBceClamp = 1e-7;

Shape broadcast_shapes(const Shape& a, const Shape& b);

}  // namespace ttp
