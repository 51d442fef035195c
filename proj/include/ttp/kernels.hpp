#pragma once

// Raw compute kernels behind the differentiable ops.
//
// Every kernel exists twice: `serial::` is the straightforward reference and
// `parallel::` is the OpenMP version used in production. Parallel kernels only
// split work over independent outputs and keep each reduction in the serial
// order, so both backends produce bit-identical results.

#include <cstddef>
#include <span>

namespace ttp::kernels {

enum class Backend { Serial, Parallel };

void set_backend(Backend backend);
Backend backend();

/// RAII switch of the process-wide backend.
class ScopedBackend {
public:
    explicit ScopedBackend(Backend b) : previous_(backend()) { set_backend(b); }
    ~ScopedBackend() { set_backend(previous_); }
    ScopedBackend(const ScopedBackend&) = delete;
    ScopedBackend& operator=(const ScopedBackend&) = delete;

private:
    Backend previous_;
};

int max_threads();

/// Batched C_i = op(A_i) * op(B_i), with op = transpose when the flag is set.
/// A_i is the m x k (or k x m when transposed) matrix at `a + a_offsets[i]`.
struct Gemm {
    bool trans_a = false;
    bool trans_b = false;
    std::size_t m = 0;
    std::size_t n = 0;
    std::size_t k = 0;
};

/// Layout of a reduction along one axis: `outer` x `len` x `inner` elements.
struct AxisLayout {
    std::size_t outer = 1;
    std::size_t len = 1;
    std::size_t inner = 1;
};

struct ConvTranspose {
    std::size_t batch = 0;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t stride = 0;
};

struct Planes {
    std::size_t count = 0;  // batch * channels
    std::size_t in_h = 0;
    std::size_t in_w = 0;
    std::size_t out_h = 0;
    std::size_t out_w = 0;
};

#define TTP_KERNEL_DECLS                                                                                      \
    void gemm(const Gemm& g, std::size_t batch, const double* a, std::span<const std::size_t> a_offsets,       \
              const double* b, std::span<const std::size_t> b_offsets, double* c);                             \
    void softmax_forward(const AxisLayout& l, const double* x, double* y);                                    \
    void softmax_backward(const AxisLayout& l, const double* y, const double* gy, double* gx);                \
    void layer_norm_forward(std::size_t rows, std::size_t d, double eps, const double* x, const double* gain,  \
                            const double* bias, double* y, double* xhat, double* rstd);                        \
    void layer_norm_backward(std::size_t rows, std::size_t d, const double* xhat, const double* rstd,           \
                             const double* gain, const double* gy, double* gx, double* ggain, double* gbias);  \
    void gelu_forward(std::size_t n, const double* x, double* y);                                             \
    void gelu_backward(std::size_t n, const double* x, const double* gy, double* gx);                         \
    void sigmoid_forward(std::size_t n, const double* x, double* y);                                          \
    void conv_transpose_forward(const ConvTranspose& c, const double* x, const double* w, const double* bias,  \
                                double* y);                                                                    \
    void conv_transpose_backward(const ConvTranspose& c, const double* x, const double* w, const double* gy,   \
                                 double* gx, double* gw, double* gbias);                                       \
    void max_pool_forward(const Planes& p, std::size_t window, const double* x, double* y, std::size_t* arg);  \
    void max_pool_backward(const Planes& p, const std::size_t* arg, const double* gy, double* gx);             \
    void bilinear_forward(const Planes& p, const double* x, double* y);                                       \
    void bilinear_backward(const Planes& p, const double* gy, double* gx);                                    \
    void permute(std::span<const std::size_t> in_shape, std::span<const std::size_t> perm, const double* x,     \
                 double* y);

namespace serial {
TTP_KERNEL_DECLS
}
namespace parallel {
TTP_KERNEL_DECLS
}
// Dispatch to the active backend.
TTP_KERNEL_DECLS

#undef TTP_KERNEL_DECLS

/// Source coordinate for align_corners=false bilinear sampling, clamped at the
/// low edge; shared by both backends and by tests.
struct BilinearTap {
    std::size_t i0 = 0;
    std::size_t i1 = 0;
    double frac = 0.0;
};
BilinearTap bilinear_tap(std::size_t out_index, std::size_t in_size, std::size_t out_size);

}  // namespace ttp::kernels
