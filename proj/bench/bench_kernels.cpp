// Serial reference kernels against their OpenMP counterparts on the shapes
// the model actually runs.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "protoseg/kernels.hpp"

namespace k = protoseg::kernels;

namespace {

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

// Args: channels in, channels out, spatial size, stride.
k::ConvGeometry geometry(const benchmark::State& state) {
    k::ConvGeometry g;
    g.in_channels = static_cast<std::size_t>(state.range(0));
    g.out_channels = static_cast<std::size_t>(state.range(1));
    g.in_h = g.in_w = static_cast<std::size_t>(state.range(2));
    g.stride = static_cast<std::size_t>(state.range(3));
    g.kernel = 3;
    g.padding = 1;
    return g;
}

template <auto Forward>
void BM_ConvForward(benchmark::State& state) {
    const auto g = geometry(state);
    const auto in = random_buffer(g.in_channels * g.in_h * g.in_w, 1);
    const auto w = random_buffer(g.out_channels * g.patch(), 2);
    const auto b = random_buffer(g.out_channels, 3);
    std::vector<double> out(g.out_channels * g.out_h() * g.out_w());
    for (auto _ : state) {
        Forward(g, in.data(), w.data(), b.data(), out.data());
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(out.size() * g.patch()));
}

template <auto Backward>
void BM_ConvBackward(benchmark::State& state) {
    const auto g = geometry(state);
    const auto in = random_buffer(g.in_channels * g.in_h * g.in_w, 1);
    const auto w = random_buffer(g.out_channels * g.patch(), 2);
    const auto gout = random_buffer(g.out_channels * g.out_h() * g.out_w(), 3);
    std::vector<double> gin(in.size()), gw(w.size()), gb(g.out_channels);
    for (auto _ : state) {
        Backward(g, in.data(), w.data(), gout.data(), gin.data(), gw.data(), gb.data());
        benchmark::DoNotOptimize(gin.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * gout.size() * g.patch()));
}

template <auto MaxCosine>
void BM_MaxCosine(benchmark::State& state) {
    const auto c = static_cast<std::size_t>(state.range(0));
    const auto n = static_cast<std::size_t>(state.range(1));
    const auto query = random_buffer(c * n, 4);
    const auto desc = random_buffer(n * c, 5);
    std::vector<double> out(n);
    for (auto _ : state) {
        MaxCosine(c, n, query.data(), n, desc.data(), out.data());
        benchmark::DoNotOptimize(out.data());
    }
}

void conv_shapes(benchmark::internal::Benchmark* b) {
    b->Args({3, 16, 64, 2})->Args({16, 16, 32, 1})->Args({32, 32, 16, 1})->Args({64, 64, 8, 1})->Args({32, 32, 32, 1});
}

}  // namespace

BENCHMARK(BM_ConvForward<k::serial::conv2d_forward>)->Name("conv_forward/serial")->Apply(conv_shapes);
BENCHMARK(BM_ConvForward<k::parallel::conv2d_forward>)->Name("conv_forward/parallel")->Apply(conv_shapes);
BENCHMARK(BM_ConvBackward<k::serial::conv2d_backward>)->Name("conv_backward/serial")->Apply(conv_shapes);
BENCHMARK(BM_ConvBackward<k::parallel::conv2d_backward>)->Name("conv_backward/parallel")->Apply(conv_shapes);
BENCHMARK(BM_MaxCosine<k::serial::max_cosine>)->Name("max_cosine/serial")->Args({64, 64})->Args({64, 256});
BENCHMARK(BM_MaxCosine<k::parallel::max_cosine>)->Name("max_cosine/parallel")->Args({64, 64})->Args({64, 256});

BENCHMARK_MAIN();
