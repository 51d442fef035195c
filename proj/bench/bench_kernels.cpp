#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ttp/kernels.hpp"
#include "ttp/model.hpp"
#include "ttp/ops.hpp"
#include "ttp/rng.hpp"

using namespace ttp;
namespace k = ttp::kernels;

namespace {

std::vector<double> random_values(std::size_t n, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> dist;
    std::vector<double> v(n);
    for (auto& x : v) x = dist(gen);
    return v;
}

k::Backend backend_arg(const benchmark::State& state) {
    return state.range(0) == 0 ? k::Backend::Serial : k::Backend::Parallel;
}

// Attention-sized batched products: (groups, tokens, d) x (groups, d, tokens).
void BM_Gemm(benchmark::State& state) {
    const k::ScopedBackend scoped(backend_arg(state));
    const std::size_t batch = 64, n = static_cast<std::size_t>(state.range(1));
    const k::Gemm g{false, true, n, n, 32};
    const auto a = random_values(batch * n * 32, 1);
    const auto b = random_values(batch * n * 32, 2);
    std::vector<double> c(batch * n * n);
    std::vector<std::size_t> ao(batch), bo(batch);
    for (std::size_t i = 0; i < batch; ++i) ao[i] = bo[i] = i * n * 32;
    for (auto _ : state) {
        k::gemm(g, batch, a.data(), ao, b.data(), bo, c.data());
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch * n * n * 32));
}
BENCHMARK(BM_Gemm)->ArgsProduct({{0, 1}, {16, 64}});

void BM_Softmax(benchmark::State& state) {
    const k::ScopedBackend scoped(backend_arg(state));
    const k::AxisLayout l{4096, 64, 1};
    const auto x = random_values(l.outer * l.len, 3);
    std::vector<double> y(x.size());
    for (auto _ : state) {
        k::softmax_forward(l, x.data(), y.data());
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(BM_Softmax)->Arg(0)->Arg(1);

void BM_LayerNorm(benchmark::State& state) {
    const k::ScopedBackend scoped(backend_arg(state));
    const std::size_t rows = 8192, d = 32;
    const auto x = random_values(rows * d, 4);
    const std::vector<double> gain(d, 1.0), bias(d, 0.0);
    std::vector<double> y(x.size()), xhat(x.size()), rstd(rows);
    for (auto _ : state) {
        k::layer_norm_forward(rows, d, 1e-5, x.data(), gain.data(), bias.data(), y.data(), xhat.data(), rstd.data());
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(BM_LayerNorm)->Arg(0)->Arg(1);

void BM_Gelu(benchmark::State& state) {
    const k::ScopedBackend scoped(backend_arg(state));
    const auto x = random_values(1 << 18, 5);
    std::vector<double> y(x.size());
    for (auto _ : state) {
        k::gelu_forward(x.size(), x.data(), y.data());
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(BM_Gelu)->Arg(0)->Arg(1);

void BM_ConvTranspose(benchmark::State& state) {
    const k::ScopedBackend scoped(backend_arg(state));
    const k::ConvTranspose c{16, 32, 8, 8, 8, 2};
    const auto x = random_values(16 * 32 * 64, 6);
    const auto w = random_values(32 * 8 * 4, 7);
    const std::vector<double> bias(8, 0.1);
    std::vector<double> y(16 * 8 * 16 * 16);
    for (auto _ : state) {
        k::conv_transpose_forward(c, x.data(), w.data(), bias.data(), y.data());
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(BM_ConvTranspose)->Arg(0)->Arg(1);

void BM_Bilinear(benchmark::State& state) {
    const k::ScopedBackend scoped(backend_arg(state));
    const k::Planes p{16 * 8, 16, 16, 64, 64};
    const auto x = random_values(p.count * p.in_h * p.in_w, 8);
    std::vector<double> y(p.count * p.out_h * p.out_w);
    for (auto _ : state) {
        k::bilinear_forward(p, x.data(), y.data());
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(BM_Bilinear)->Arg(0)->Arg(1);

// One toy-model training step at batch 8.
void BM_TrainStep(benchmark::State& state) {
    const k::ScopedBackend scoped(backend_arg(state));
    const TtpModel model(ModelConfig{});
    Rng rng(9);
    const Tensor a = rand_uniform({8, 3, 64, 64}, rng, 0, 1);
    const Tensor b = rand_uniform({8, 3, 64, 64}, rng, 0, 1);
    const Tensor y = Tensor::zeros({8, 1, 32, 32});
    for (auto _ : state) {
        bce_loss(model.forward(a, b), y).backward();
    }
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
