// Reference kernels. Plain loops, no threading; the parallel backend is tested
// against these for bit equality.

#include <algorithm>
#include <cmath>
#include <vector>

#include "ttp/kernels.hpp"

namespace ttp::kernels {

BilinearTap bilinear_tap(std::size_t out_index, std::size_t in_size, std::size_t out_size) {
    const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
    double src = (static_cast<double>(out_index) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    BilinearTap tap;
    tap.i0 = std::min(static_cast<std::size_t>(src), in_size - 1);
    tap.i1 = std::min(tap.i0 + 1, in_size - 1);
    tap.frac = src - static_cast<double>(tap.i0);
    if (tap.i0 == tap.i1) tap.frac = 0.0;
    return tap;
}

namespace serial {

namespace {

constexpr double kSqrt2OverPi = 0.7978845608028654;
constexpr double kGeluCubic = 0.044715;

}  // namespace

void gemm(const Gemm& g, std::size_t batch, const double* a, std::span<const std::size_t> a_offsets, const double* b,
          std::span<const std::size_t> b_offsets, double* c) {
    for (std::size_t bi = 0; bi < batch; ++bi) {
        const double* A = a + a_offsets[bi];
        const double* B = b + b_offsets[bi];
        double* C = c + bi * g.m * g.n;
        for (std::size_t i = 0; i < g.m; ++i) {
            for (std::size_t j = 0; j < g.n; ++j) {
                double s = 0.0;
                for (std::size_t p = 0; p < g.k; ++p) {
                    const double av = g.trans_a ? A[p * g.m + i] : A[i * g.k + p];
                    const double bv = g.trans_b ? B[j * g.k + p] : B[p * g.n + j];
                    s += av * bv;
                }
                C[i * g.n + j] = s;
            }
        }
    }
}

void softmax_forward(const AxisLayout& l, const double* x, double* y) {
    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t in = 0; in < l.inner; ++in) {
            const std::size_t base = o * l.len * l.inner + in;
            double mx = x[base];
            for (std::size_t t = 1; t < l.len; ++t) mx = std::max(mx, x[base + t * l.inner]);
            double sum = 0.0;
            for (std::size_t t = 0; t < l.len; ++t) {
                const double e = std::exp(x[base + t * l.inner] - mx);
                y[base + t * l.inner] = e;
                sum += e;
            }
            for (std::size_t t = 0; t < l.len; ++t) y[base + t * l.inner] /= sum;
        }
    }
}

void softmax_backward(const AxisLayout& l, const double* y, const double* gy, double* gx) {
    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t in = 0; in < l.inner; ++in) {
            const std::size_t base = o * l.len * l.inner + in;
            double dot = 0.0;
            for (std::size_t t = 0; t < l.len; ++t) dot += gy[base + t * l.inner] * y[base + t * l.inner];
            for (std::size_t t = 0; t < l.len; ++t) {
                const std::size_t i = base + t * l.inner;
                gx[i] = y[i] * (gy[i] - dot);
            }
        }
    }
}

void layer_norm_forward(std::size_t rows, std::size_t d, double eps, const double* x, const double* gain,
                        const double* bias, double* y, double* xhat, double* rstd) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x + r * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<double>(d);
        const double rs = 1.0 / std::sqrt(var + eps);
        rstd[r] = rs;
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (xr[j] - mean) * rs;
            xhat[r * d + j] = h;
            y[r * d + j] = h * gain[j] + bias[j];
        }
    }
}

void layer_norm_backward(std::size_t rows, std::size_t d, const double* xhat, const double* rstd, const double* gain,
                         const double* gy, double* gx, double* ggain, double* gbias) {
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t r = 0; r < rows; ++r) {
        double mean_g = 0.0;
        double mean_gh = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double gh = gy[r * d + j] * gain[j];
            mean_g += gh;
            mean_gh += gh * xhat[r * d + j];
        }
        mean_g *= inv_d;
        mean_gh *= inv_d;
        for (std::size_t j = 0; j < d; ++j) {
            const double gh = gy[r * d + j] * gain[j];
            gx[r * d + j] = rstd[r] * (gh - mean_g - xhat[r * d + j] * mean_gh);
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        double sg = 0.0;
        double sb = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            sg += gy[r * d + j] * xhat[r * d + j];
            sb += gy[r * d + j];
        }
        ggain[j] = sg;
        gbias[j] = sb;
    }
}

void gelu_forward(std::size_t n, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x[i];
        y[i] = 0.5 * v * (1.0 + std::tanh(kSqrt2OverPi * (v + kGeluCubic * v * v * v)));
    }
}

void gelu_backward(std::size_t n, const double* x, const double* gy, double* gx) {
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x[i];
        const double t = std::tanh(kSqrt2OverPi * (v + kGeluCubic * v * v * v));
        const double dinner = kSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * v * v);
        gx[i] = gy[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * dinner);
    }
}

void sigmoid_forward(std::size_t n, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x[i];
        if (v >= 0.0) {
            y[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            y[i] = e / (1.0 + e);
        }
    }
}

void conv_transpose_forward(const ConvTranspose& c, const double* x, const double* w, const double* bias, double* y) {
    const std::size_t s = c.stride;
    const std::size_t oh = c.height * s;
    const std::size_t ow = c.width * s;
    for (std::size_t b = 0; b < c.batch; ++b) {
        for (std::size_t co = 0; co < c.out_channels; ++co) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const std::size_t iy = oy / s;
                    const std::size_t ix = ox / s;
                    const std::size_t ky = oy % s;
                    const std::size_t kx = ox % s;
                    double acc = 0.0;
                    for (std::size_t ci = 0; ci < c.in_channels; ++ci) {
                        acc += x[((b * c.in_channels + ci) * c.height + iy) * c.width + ix] *
                               w[((ci * c.out_channels + co) * s + ky) * s + kx];
                    }
                    y[((b * c.out_channels + co) * oh + oy) * ow + ox] = acc + (bias ? bias[co] : 0.0);
                }
            }
        }
    }
}

void conv_transpose_backward(const ConvTranspose& c, const double* x, const double* w, const double* gy, double* gx,
                             double* gw, double* gbias) {
    const std::size_t s = c.stride;
    const std::size_t oh = c.height * s;
    const std::size_t ow = c.width * s;
    auto gy_at = [&](std::size_t b, std::size_t co, std::size_t oy, std::size_t ox) {
        return gy[((b * c.out_channels + co) * oh + oy) * ow + ox];
    };
    if (gx) {
        for (std::size_t b = 0; b < c.batch; ++b) {
            for (std::size_t ci = 0; ci < c.in_channels; ++ci) {
                for (std::size_t iy = 0; iy < c.height; ++iy) {
                    for (std::size_t ix = 0; ix < c.width; ++ix) {
                        double acc = 0.0;
                        for (std::size_t co = 0; co < c.out_channels; ++co) {
                            for (std::size_t ky = 0; ky < s; ++ky) {
                                for (std::size_t kx = 0; kx < s; ++kx) {
                                    acc += gy_at(b, co, iy * s + ky, ix * s + kx) *
                                           w[((ci * c.out_channels + co) * s + ky) * s + kx];
                                }
                            }
                        }
                        gx[((b * c.in_channels + ci) * c.height + iy) * c.width + ix] = acc;
                    }
                }
            }
        }
    }
    if (gw) {
        for (std::size_t ci = 0; ci < c.in_channels; ++ci) {
            for (std::size_t co = 0; co < c.out_channels; ++co) {
                for (std::size_t ky = 0; ky < s; ++ky) {
                    for (std::size_t kx = 0; kx < s; ++kx) {
                        double acc = 0.0;
                        for (std::size_t b = 0; b < c.batch; ++b) {
                            for (std::size_t iy = 0; iy < c.height; ++iy) {
                                for (std::size_t ix = 0; ix < c.width; ++ix) {
                                    acc += x[((b * c.in_channels + ci) * c.height + iy) * c.width + ix] *
                                           gy_at(b, co, iy * s + ky, ix * s + kx);
                                }
                            }
                        }
                        gw[((ci * c.out_channels + co) * s + ky) * s + kx] = acc;
                    }
                }
            }
        }
    }
    if (gbias) {
        for (std::size_t co = 0; co < c.out_channels; ++co) {
            double acc = 0.0;
            for (std::size_t b = 0; b < c.batch; ++b) {
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    for (std::size_t ox = 0; ox < ow; ++ox) acc += gy_at(b, co, oy, ox);
                }
            }
            gbias[co] = acc;
        }
    }
}

void max_pool_forward(const Planes& p, std::size_t window, const double* x, double* y, std::size_t* arg) {
    for (std::size_t pl = 0; pl < p.count; ++pl) {
        const double* xp = x + pl * p.in_h * p.in_w;
        for (std::size_t oy = 0; oy < p.out_h; ++oy) {
            for (std::size_t ox = 0; ox < p.out_w; ++ox) {
                std::size_t best = (oy * window) * p.in_w + ox * window;
                for (std::size_t dy = 0; dy < window; ++dy) {
                    for (std::size_t dx = 0; dx < window; ++dx) {
                        const std::size_t idx = (oy * window + dy) * p.in_w + ox * window + dx;
                        if (xp[idx] > xp[best]) best = idx;
                    }
                }
                const std::size_t o = pl * p.out_h * p.out_w + oy * p.out_w + ox;
                y[o] = xp[best];
                arg[o] = pl * p.in_h * p.in_w + best;
            }
        }
    }
}

void max_pool_backward(const Planes& p, const std::size_t* arg, const double* gy, double* gx) {
    std::fill(gx, gx + p.count * p.in_h * p.in_w, 0.0);
    const std::size_t n = p.count * p.out_h * p.out_w;
    for (std::size_t o = 0; o < n; ++o) gx[arg[o]] += gy[o];
}

void bilinear_forward(const Planes& p, const double* x, double* y) {
    for (std::size_t pl = 0; pl < p.count; ++pl) {
        const double* xp = x + pl * p.in_h * p.in_w;
        double* yp = y + pl * p.out_h * p.out_w;
        for (std::size_t oy = 0; oy < p.out_h; ++oy) {
            const auto ty = bilinear_tap(oy, p.in_h, p.out_h);
            for (std::size_t ox = 0; ox < p.out_w; ++ox) {
                const auto tx = bilinear_tap(ox, p.in_w, p.out_w);
                const double top = xp[ty.i0 * p.in_w + tx.i0] * (1.0 - tx.frac) + xp[ty.i0 * p.in_w + tx.i1] * tx.frac;
                const double bot = xp[ty.i1 * p.in_w + tx.i0] * (1.0 - tx.frac) + xp[ty.i1 * p.in_w + tx.i1] * tx.frac;
                yp[oy * p.out_w + ox] = top * (1.0 - ty.frac) + bot * ty.frac;
            }
        }
    }
}

void bilinear_backward(const Planes& p, const double* gy, double* gx) {
    std::fill(gx, gx + p.count * p.in_h * p.in_w, 0.0);
    for (std::size_t pl = 0; pl < p.count; ++pl) {
        double* gp = gx + pl * p.in_h * p.in_w;
        const double* gyp = gy + pl * p.out_h * p.out_w;
        for (std::size_t oy = 0; oy < p.out_h; ++oy) {
            const auto ty = bilinear_tap(oy, p.in_h, p.out_h);
            for (std::size_t ox = 0; ox < p.out_w; ++ox) {
                const auto tx = bilinear_tap(ox, p.in_w, p.out_w);
                const double g = gyp[oy * p.out_w + ox];
                gp[ty.i0 * p.in_w + tx.i0] += g * (1.0 - ty.frac) * (1.0 - tx.frac);
                gp[ty.i0 * p.in_w + tx.i1] += g * (1.0 - ty.frac) * tx.frac;
                gp[ty.i1 * p.in_w + tx.i0] += g * ty.frac * (1.0 - tx.frac);
                gp[ty.i1 * p.in_w + tx.i1] += g * ty.frac * tx.frac;
            }
        }
    }
}

void permute(std::span<const std::size_t> in_shape, std::span<const std::size_t> perm, const double* x, double* y) {
    const std::size_t rank = in_shape.size();
    std::vector<std::size_t> in_strides(rank, 1);
    for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
    std::vector<std::size_t> out_shape(rank);
    for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[perm[i]];
    std::size_t total = 1;
    for (auto d : in_shape) total *= d;
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t o = 0; o < total; ++o) {
        std::size_t src = 0;
        for (std::size_t i = 0; i < rank; ++i) src += idx[i] * in_strides[perm[i]];
        y[o] = x[src];
        for (std::size_t i = rank; i-- > 0;) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
}

}  // namespace serial
}  // namespace ttp::kernels
