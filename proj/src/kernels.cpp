#include "ttp/kernels.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ttp::kernels {

namespace {

std::atomic<Backend> g_backend{Backend::Parallel};

}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

#define TTP_DISPATCH(fn, ...)                                  \
    if (backend() == Backend::Parallel) {                      \
        parallel::fn(__VA_ARGS__);                             \
    } else {                                                   \
        serial::fn(__VA_ARGS__);                               \
    }

void gemm(const Gemm& g, std::size_t batch, const double* a, std::span<const std::size_t> a_offsets, const double* b,
          std::span<const std::size_t> b_offsets, double* c) {
    TTP_DISPATCH(gemm, g, batch, a, a_offsets, b, b_offsets, c)
}

void softmax_forward(const AxisLayout& l, const double* x, double* y) { TTP_DISPATCH(softmax_forward, l, x, y) }

void softmax_backward(const AxisLayout& l, const double* y, const double* gy, double* gx) {
    TTP_DISPATCH(softmax_backward, l, y, gy, gx)
}

void layer_norm_forward(std::size_t rows, std::size_t d, double eps, const double* x, const double* gain,
                        const double* bias, double* y, double* xhat, double* rstd) {
    TTP_DISPATCH(layer_norm_forward, rows, d, eps, x, gain, bias, y, xhat, rstd)
}

void layer_norm_backward(std::size_t rows, std::size_t d, const double* xhat, const double* rstd, const double* gain,
                         const double* gy, double* gx, double* ggain, double* gbias) {
    TTP_DISPATCH(layer_norm_backward, rows, d, xhat, rstd, gain, gy, gx, ggain, gbias)
}

void gelu_forward(std::size_t n, const double* x, double* y) { TTP_DISPATCH(gelu_forward, n, x, y) }

void gelu_backward(std::size_t n, const double* x, const double* gy, double* gx) {
    TTP_DISPATCH(gelu_backward, n, x, gy, gx)
}

void sigmoid_forward(std::size_t n, const double* x, double* y) { TTP_DISPATCH(sigmoid_forward, n, x, y) }

void conv_transpose_forward(const ConvTranspose& c, const double* x, const double* w, const double* bias, double* y) {
    TTP_DISPATCH(conv_transpose_forward, c, x, w, bias, y)
}

void conv_transpose_backward(const ConvTranspose& c, const double* x, const double* w, const double* gy, double* gx,
                             double* gw, double* gbias) {
    TTP_DISPATCH(conv_transpose_backward, c, x, w, gy, gx, gw, gbias)
}

void max_pool_forward(const Planes& p, std::size_t window, const double* x, double* y, std::size_t* arg) {
    TTP_DISPATCH(max_pool_forward, p, window, x, y, arg)
}

void max_pool_backward(const Planes& p, const std::size_t* arg, const double* gy, double* gx) {
    TTP_DISPATCH(max_pool_backward, p, arg, gy, gx)
}

void bilinear_forward(const Planes& p, const double* x, double* y) { TTP_DISPATCH(bilinear_forward, p, x, y) }

void bilinear_backward(const Planes& p, const double* gy, double* gx) { TTP_DISPATCH(bilinear_backward, p, gy, gx) }

void permute(std::span<const std::size_t> in_shape, std::span<const std::size_t> perm, const double* x, double* y) {
    TTP_DISPATCH(permute, in_shape, perm, x, y)
}

#undef TTP_DISPATCH

}  // namespace ttp::kernels
