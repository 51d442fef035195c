#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ttp/kernels.hpp"

namespace ttp::kernels::parallel {

namespace {

constexpr double kSqrt2OverPi = 0.7978845608028654;
constexpr double kGeluCubic = 0.044715;

// Below this many scalar multiply-adds a region runs on one thread.
constexpr std::size_t kMinParallelWork = 1 << 14;

using Index = std::int64_t;

inline bool worth_it(std::size_t work) { return work >= kMinParallelWork; }

}  // namespace

void gemm(const Gemm& g, std::size_t batch, const double* a, std::span<const std::size_t> a_offsets, const double* b,
          std::span<const std::size_t> b_offsets, double* c) {
    // B^T is copied into row-major (k, n) blocks so every case runs the
    // vectorizable i-p-j loop. Each C[i][j] still sums over p in order.
    std::vector<double> bt;
    std::vector<std::size_t> bt_offsets;
    if (g.trans_b) {
        std::vector<std::size_t> uniq(b_offsets.begin(), b_offsets.begin() + static_cast<std::ptrdiff_t>(batch));
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        const std::size_t block = g.k * g.n;
        bt.resize(uniq.size() * block);
        const Index nb = static_cast<Index>(uniq.size());
#pragma omp parallel for schedule(static) if (worth_it(uniq.size() * block))
        for (Index u = 0; u < nb; ++u) {
            const double* src = b + uniq[static_cast<std::size_t>(u)];
            double* dst = bt.data() + static_cast<std::size_t>(u) * block;
            for (std::size_t j = 0; j < g.n; ++j) {
                for (std::size_t p = 0; p < g.k; ++p) dst[p * g.n + j] = src[j * g.k + p];
            }
        }
        bt_offsets.resize(batch);
        for (std::size_t bi = 0; bi < batch; ++bi) {
            const auto pos = std::lower_bound(uniq.begin(), uniq.end(), b_offsets[bi]) - uniq.begin();
            bt_offsets[bi] = static_cast<std::size_t>(pos) * block;
        }
        b = bt.data();
        b_offsets = bt_offsets;
    }
    // Register tiles of kMr x kNr outputs; the p loop stays innermost per
    // element, so sums are formed exactly as in the serial kernel.
    constexpr std::size_t kMr = 4;
    constexpr std::size_t kNr = 4;
    const std::size_t row_blocks = (g.m + kMr - 1) / kMr;
    const Index tasks = static_cast<Index>(batch * row_blocks);
    const bool par = worth_it(batch * g.m * g.n * g.k);
#pragma omp parallel for schedule(static) if (par)
    for (Index t = 0; t < tasks; ++t) {
        const std::size_t bi = static_cast<std::size_t>(t) / row_blocks;
        const std::size_t i0 = (static_cast<std::size_t>(t) % row_blocks) * kMr;
        const std::size_t mr = std::min(kMr, g.m - i0);
        const double* A = a + a_offsets[bi];
        const double* B = b + b_offsets[bi];
        double* C = c + bi * g.m * g.n;
        const std::size_t a_row = g.trans_a ? 1 : g.k;
        const std::size_t a_col = g.trans_a ? g.m : 1;
        std::size_t j0 = 0;
        if (mr == kMr) {
            for (; j0 + kNr <= g.n; j0 += kNr) {
                double acc[kMr][kNr] = {};
                for (std::size_t p = 0; p < g.k; ++p) {
                    const double* Bp = B + p * g.n + j0;
                    for (std::size_t r = 0; r < kMr; ++r) {
                        const double av = A[(i0 + r) * a_row + p * a_col];
                        for (std::size_t jj = 0; jj < kNr; ++jj) acc[r][jj] += av * Bp[jj];
                    }
                }
                for (std::size_t r = 0; r < kMr; ++r) {
                    for (std::size_t jj = 0; jj < kNr; ++jj) C[(i0 + r) * g.n + j0 + jj] = acc[r][jj];
                }
            }
        }
        // Edges: plain row loops over the remaining columns.
        for (std::size_t r = 0; r < mr; ++r) {
            double* Ci = C + (i0 + r) * g.n;
            std::fill(Ci + j0, Ci + g.n, 0.0);
            for (std::size_t p = 0; p < g.k; ++p) {
                const double av = A[(i0 + r) * a_row + p * a_col];
                const double* Bp = B + p * g.n;
                for (std::size_t j = j0; j < g.n; ++j) Ci[j] += av * Bp[j];
            }
        }
    }
}

void softmax_forward(const AxisLayout& l, const double* x, double* y) {
    const Index lines = static_cast<Index>(l.outer * l.inner);
#pragma omp parallel for schedule(static) if (worth_it(l.outer * l.inner * l.len * 8))
    for (Index li = 0; li < lines; ++li) {
        const std::size_t o = static_cast<std::size_t>(li) / l.inner;
        const std::size_t in = static_cast<std::size_t>(li) % l.inner;
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

void softmax_backward(const AxisLayout& l, const double* y, const double* gy, double* gx) {
    const Index lines = static_cast<Index>(l.outer * l.inner);
#pragma omp parallel for schedule(static) if (worth_it(l.outer * l.inner * l.len * 2))
    for (Index li = 0; li < lines; ++li) {
        const std::size_t o = static_cast<std::size_t>(li) / l.inner;
        const std::size_t in = static_cast<std::size_t>(li) % l.inner;
        const std::size_t base = o * l.len * l.inner + in;
        double dot = 0.0;
        for (std::size_t t = 0; t < l.len; ++t) dot += gy[base + t * l.inner] * y[base + t * l.inner];
        for (std::size_t t = 0; t < l.len; ++t) {
            const std::size_t i = base + t * l.inner;
            gx[i] = y[i] * (gy[i] - dot);
        }
    }
}

void layer_norm_forward(std::size_t rows, std::size_t d, double eps, const double* x, const double* gain,
                        const double* bias, double* y, double* xhat, double* rstd) {
#pragma omp parallel for schedule(static) if (worth_it(rows * d * 4))
    for (Index ri = 0; ri < static_cast<Index>(rows); ++ri) {
        const std::size_t r = static_cast<std::size_t>(ri);
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
    const bool par = worth_it(rows * d * 4);
#pragma omp parallel if (par)
    {
#pragma omp for schedule(static)
        for (Index ri = 0; ri < static_cast<Index>(rows); ++ri) {
            const std::size_t r = static_cast<std::size_t>(ri);
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
#pragma omp for schedule(static)
        for (Index ji = 0; ji < static_cast<Index>(d); ++ji) {
            const std::size_t j = static_cast<std::size_t>(ji);
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
}

void gelu_forward(std::size_t n, const double* x, double* y) {
#pragma omp parallel for schedule(static) if (worth_it(n * 8))
    for (Index ii = 0; ii < static_cast<Index>(n); ++ii) {
        const double v = x[ii];
        y[ii] = 0.5 * v * (1.0 + std::tanh(kSqrt2OverPi * (v + kGeluCubic * v * v * v)));
    }
}

void gelu_backward(std::size_t n, const double* x, const double* gy, double* gx) {
#pragma omp parallel for schedule(static) if (worth_it(n * 8))
    for (Index ii = 0; ii < static_cast<Index>(n); ++ii) {
        const double v = x[ii];
        const double t = std::tanh(kSqrt2OverPi * (v + kGeluCubic * v * v * v));
        const double dinner = kSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * v * v);
        gx[ii] = gy[ii] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * dinner);
    }
}

void sigmoid_forward(std::size_t n, const double* x, double* y) {
#pragma omp parallel for schedule(static) if (worth_it(n * 8))
    for (Index ii = 0; ii < static_cast<Index>(n); ++ii) {
        const double v = x[ii];
        if (v >= 0.0) {
            y[ii] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            y[ii] = e / (1.0 + e);
        }
    }
}

void conv_transpose_forward(const ConvTranspose& c, const double* x, const double* w, const double* bias, double* y) {
    const std::size_t s = c.stride;
    const std::size_t oh = c.height * s;
    const std::size_t ow = c.width * s;
    const std::size_t plane = c.height * c.width;
    const Index jobs = static_cast<Index>(c.batch * c.out_channels);
#pragma omp parallel for schedule(static) if (worth_it(c.batch * c.out_channels * c.in_channels * plane * s * s))
    for (Index job = 0; job < jobs; ++job) {
        const std::size_t b = static_cast<std::size_t>(job) / c.out_channels;
        const std::size_t co = static_cast<std::size_t>(job) % c.out_channels;
        double* yp = y + (b * c.out_channels + co) * oh * ow;
        std::fill(yp, yp + oh * ow, 0.0);
        for (std::size_t ci = 0; ci < c.in_channels; ++ci) {
            const double* xp = x + (b * c.in_channels + ci) * plane;
            const double* wk = w + (ci * c.out_channels + co) * s * s;
            for (std::size_t iy = 0; iy < c.height; ++iy) {
                for (std::size_t ky = 0; ky < s; ++ky) {
                    double* row = yp + (iy * s + ky) * ow;
                    for (std::size_t ix = 0; ix < c.width; ++ix) {
                        const double xv = xp[iy * c.width + ix];
                        for (std::size_t kx = 0; kx < s; ++kx) row[ix * s + kx] += xv * wk[ky * s + kx];
                    }
                }
            }
        }
        const double bv = bias ? bias[co] : 0.0;
        for (std::size_t i = 0; i < oh * ow; ++i) yp[i] += bv;
    }
}

void conv_transpose_backward(const ConvTranspose& c, const double* x, const double* w, const double* gy, double* gx,
                             double* gw, double* gbias) {
    const std::size_t s = c.stride;
    const std::size_t oh = c.height * s;
    const std::size_t ow = c.width * s;
    const std::size_t plane = c.height * c.width;
    const bool par = worth_it(c.batch * c.out_channels * c.in_channels * plane * s * s);
    if (gx) {
        const Index jobs = static_cast<Index>(c.batch * c.in_channels);
#pragma omp parallel for schedule(static) if (par)
        for (Index job = 0; job < jobs; ++job) {
            const std::size_t b = static_cast<std::size_t>(job) / c.in_channels;
            const std::size_t ci = static_cast<std::size_t>(job) % c.in_channels;
            double* gp = gx + (b * c.in_channels + ci) * plane;
            for (std::size_t iy = 0; iy < c.height; ++iy) {
                for (std::size_t ix = 0; ix < c.width; ++ix) {
                    double acc = 0.0;
                    for (std::size_t co = 0; co < c.out_channels; ++co) {
                        const double* gyp = gy + (b * c.out_channels + co) * oh * ow;
                        const double* wk = w + (ci * c.out_channels + co) * s * s;
                        for (std::size_t ky = 0; ky < s; ++ky) {
                            for (std::size_t kx = 0; kx < s; ++kx) {
                                acc += gyp[(iy * s + ky) * ow + ix * s + kx] * wk[ky * s + kx];
                            }
                        }
                    }
                    gp[iy * c.width + ix] = acc;
                }
            }
        }
    }
    if (gw) {
        const Index jobs = static_cast<Index>(c.in_channels * c.out_channels);
#pragma omp parallel for schedule(static) if (par)
        for (Index job = 0; job < jobs; ++job) {
            const std::size_t ci = static_cast<std::size_t>(job) / c.out_channels;
            const std::size_t co = static_cast<std::size_t>(job) % c.out_channels;
            for (std::size_t ky = 0; ky < s; ++ky) {
                for (std::size_t kx = 0; kx < s; ++kx) {
                    double acc = 0.0;
                    for (std::size_t b = 0; b < c.batch; ++b) {
                        const double* xp = x + (b * c.in_channels + ci) * plane;
                        const double* gyp = gy + (b * c.out_channels + co) * oh * ow;
                        for (std::size_t iy = 0; iy < c.height; ++iy) {
                            for (std::size_t ix = 0; ix < c.width; ++ix) {
                                acc += xp[iy * c.width + ix] * gyp[(iy * s + ky) * ow + ix * s + kx];
                            }
                        }
                    }
                    gw[((ci * c.out_channels + co) * s + ky) * s + kx] = acc;
                }
            }
        }
    }
    if (gbias) {
#pragma omp parallel for schedule(static) if (par)
        for (Index coi = 0; coi < static_cast<Index>(c.out_channels); ++coi) {
            const std::size_t co = static_cast<std::size_t>(coi);
            double acc = 0.0;
            for (std::size_t b = 0; b < c.batch; ++b) {
                const double* gyp = gy + (b * c.out_channels + co) * oh * ow;
                for (std::size_t i = 0; i < oh * ow; ++i) acc += gyp[i];
            }
            gbias[co] = acc;
        }
    }
}

void max_pool_forward(const Planes& p, std::size_t window, const double* x, double* y, std::size_t* arg) {
#pragma omp parallel for schedule(static) if (worth_it(p.count * p.in_h * p.in_w))
    for (Index pi = 0; pi < static_cast<Index>(p.count); ++pi) {
        const std::size_t pl = static_cast<std::size_t>(pi);
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
    const bool par = worth_it(p.count * p.in_h * p.in_w);
#pragma omp parallel if (par)
    {
#pragma omp for schedule(static)
        for (Index i = 0; i < static_cast<Index>(p.count * p.in_h * p.in_w); ++i) gx[i] = 0.0;
        // Windows do not overlap, so each input cell receives at most one write.
#pragma omp for schedule(static)
        for (Index o = 0; o < static_cast<Index>(p.count * p.out_h * p.out_w); ++o) gx[arg[o]] += gy[o];
    }
}

void bilinear_forward(const Planes& p, const double* x, double* y) {
    std::vector<BilinearTap> ty(p.out_h);
    std::vector<BilinearTap> tx(p.out_w);
    for (std::size_t i = 0; i < p.out_h; ++i) ty[i] = bilinear_tap(i, p.in_h, p.out_h);
    for (std::size_t i = 0; i < p.out_w; ++i) tx[i] = bilinear_tap(i, p.in_w, p.out_w);
#pragma omp parallel for schedule(static) if (worth_it(p.count * p.out_h * p.out_w * 4))
    for (Index pi = 0; pi < static_cast<Index>(p.count); ++pi) {
        const std::size_t pl = static_cast<std::size_t>(pi);
        const double* xp = x + pl * p.in_h * p.in_w;
        double* yp = y + pl * p.out_h * p.out_w;
        for (std::size_t oy = 0; oy < p.out_h; ++oy) {
            const auto& a = ty[oy];
            for (std::size_t ox = 0; ox < p.out_w; ++ox) {
                const auto& b = tx[ox];
                const double top = xp[a.i0 * p.in_w + b.i0] * (1.0 - b.frac) + xp[a.i0 * p.in_w + b.i1] * b.frac;
                const double bot = xp[a.i1 * p.in_w + b.i0] * (1.0 - b.frac) + xp[a.i1 * p.in_w + b.i1] * b.frac;
                yp[oy * p.out_w + ox] = top * (1.0 - a.frac) + bot * a.frac;
            }
        }
    }
}

void bilinear_backward(const Planes& p, const double* gy, double* gx) {
    std::vector<BilinearTap> ty(p.out_h);
    std::vector<BilinearTap> tx(p.out_w);
    for (std::size_t i = 0; i < p.out_h; ++i) ty[i] = bilinear_tap(i, p.in_h, p.out_h);
    for (std::size_t i = 0; i < p.out_w; ++i) tx[i] = bilinear_tap(i, p.in_w, p.out_w);
#pragma omp parallel for schedule(static) if (worth_it(p.count * p.out_h * p.out_w * 4))
    for (Index pi = 0; pi < static_cast<Index>(p.count); ++pi) {
        const std::size_t pl = static_cast<std::size_t>(pi);
        double* gp = gx + pl * p.in_h * p.in_w;
        const double* gyp = gy + pl * p.out_h * p.out_w;
        std::fill(gp, gp + p.in_h * p.in_w, 0.0);
        for (std::size_t oy = 0; oy < p.out_h; ++oy) {
            const auto& a = ty[oy];
            for (std::size_t ox = 0; ox < p.out_w; ++ox) {
                const auto& b = tx[ox];
                const double g = gyp[oy * p.out_w + ox];
                gp[a.i0 * p.in_w + b.i0] += g * (1.0 - a.frac) * (1.0 - b.frac);
                gp[a.i0 * p.in_w + b.i1] += g * (1.0 - a.frac) * b.frac;
                gp[a.i1 * p.in_w + b.i0] += g * a.frac * (1.0 - b.frac);
                gp[a.i1 * p.in_w + b.i1] += g * a.frac * b.frac;
            }
        }
    }
}

void permute(std::span<const std::size_t> in_shape, std::span<const std::size_t> perm, const double* x, double* y) {
    const std::size_t rank = in_shape.size();
    std::vector<std::size_t> in_strides(rank, 1);
    for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
    std::vector<std::size_t> out_shape(rank);
    std::vector<std::size_t> src_stride(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        out_shape[i] = in_shape[perm[i]];
        src_stride[i] = in_strides[perm[i]];
    }
    const std::size_t inner = rank ? out_shape[rank - 1] : 1;
    const std::size_t inner_stride = rank ? src_stride[rank - 1] : 1;
    std::size_t rows = 1;
    for (std::size_t i = 0; i + 1 < rank; ++i) rows *= out_shape[i];
#pragma omp parallel for schedule(static) if (worth_it(rows * inner))
    for (Index ri = 0; ri < static_cast<Index>(rows); ++ri) {
        std::size_t rem = static_cast<std::size_t>(ri);
        std::size_t src = 0;
        for (std::size_t i = rank - 1; i-- > 0;) {
            src += (rem % out_shape[i]) * src_stride[i];
            rem /= out_shape[i];
        }
        double* yr = y + static_cast<std::size_t>(ri) * inner;
        for (std::size_t j = 0; j < inner; ++j) yr[j] = x[src + j * inner_stride];
    }
}

}  // namespace ttp::kernels::parallel
