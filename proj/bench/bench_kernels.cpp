// Serial reference vs OpenMP kernels on the shapes the toy pyramid uses.
// Args: {in_channels, out_channels, side}; every conv is 3x3, stride 2, pad 1
// (the encoder stages) except where noted.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "mixsup/kernels.hpp"
#include "mixsup/model.hpp"

namespace k = mixsup::kernels;

namespace {

std::vector<float> noise(std::size_t n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

k::ConvShape stage_shape(const benchmark::State& state) {
    k::ConvShape s;
    s.in_channels = static_cast<int>(state.range(0));
    s.out_channels = static_cast<int>(state.range(1));
    s.kernel = 3;
    s.stride = 2;
    s.pad = 1;
    s.in_h = s.in_w = static_cast<int>(state.range(2));
    return s;
}

template <auto Forward>
void conv_forward(benchmark::State& state) {
    const auto s = stage_shape(state);
    const auto in = noise(static_cast<std::size_t>(s.in_channels * s.in_h * s.in_w), 1);
    const auto w = noise(static_cast<std::size_t>(s.weight_count()), 2);
    const auto b = noise(static_cast<std::size_t>(s.out_channels), 3);
    std::vector<float> out(static_cast<std::size_t>(s.out_channels * s.out_h() * s.out_w()));
    for (auto _ : state) {
        Forward(s, in, w, b, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long long>(out.size()) * s.patch_size());
}

template <auto Backward>
void conv_backward(benchmark::State& state) {
    const auto s = stage_shape(state);
    const auto in = noise(static_cast<std::size_t>(s.in_channels * s.in_h * s.in_w), 1);
    const auto w = noise(static_cast<std::size_t>(s.weight_count()), 2);
    const auto go = noise(static_cast<std::size_t>(s.out_channels * s.out_h() * s.out_w()), 4);
    std::vector<float> gi(in.size()), gw(w.size()), gb(static_cast<std::size_t>(s.out_channels));
    for (auto _ : state) {
        Backward(s, in, w, go, gi, gw, gb);
        benchmark::DoNotOptimize(gi.data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * static_cast<long long>(go.size()) * s.patch_size());
}

template <auto Resize>
void resize(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    const int in_side = static_cast<int>(state.range(1));
    const int out_side = static_cast<int>(state.range(2));
    const auto in = noise(static_cast<std::size_t>(c * in_side * in_side), 5);
    std::vector<float> out(static_cast<std::size_t>(c * out_side * out_side));
    for (auto _ : state) {
        Resize(c, in_side, in_side, in, out_side, out_side, out);
        benchmark::DoNotOptimize(out.data());
    }
}

// Whole forward + backward of the default model on one image.
void model_step(benchmark::State& state) {
    mixsup::Model m(mixsup::ModelConfig{}, 1);
    m.set_backend(state.range(0) == 0 ? mixsup::KernelBackend::Serial : mixsup::KernelBackend::Parallel);
    const int side = static_cast<int>(state.range(1));
    mixsup::ImageTensor img(side, side, 3);
    const auto px = noise(img.size(), 6);
    std::copy(px.begin(), px.end(), img.values().begin());
    std::vector<double> gl(static_cast<std::size_t>(side * side), 1e-3);
    std::vector<float> gp(m.parameter_count());
    for (auto _ : state) {
        const auto pass = m.forward(img);
        m.backward(pass, gl, gp);
        benchmark::DoNotOptimize(gp.data());
    }
    state.SetLabel(state.range(0) == 0 ? "serial" : "parallel");
}

void stage_args(benchmark::internal::Benchmark* b) {
    b->Args({3, 16, 96})->Args({16, 32, 48})->Args({32, 64, 24})->Args({64, 128, 12});
}

}  // namespace

BENCHMARK(conv_forward<k::serial::conv2d_forward>)->Name("conv_forward/serial")->Apply(stage_args);
BENCHMARK(conv_forward<k::parallel::conv2d_forward>)->Name("conv_forward/parallel")->Apply(stage_args);
BENCHMARK(conv_backward<k::serial::conv2d_backward>)->Name("conv_backward/serial")->Apply(stage_args);
BENCHMARK(conv_backward<k::parallel::conv2d_backward>)->Name("conv_backward/parallel")->Apply(stage_args);
BENCHMARK(resize<k::serial::bilinear_resize>)->Name("resize/serial")->Args({32, 24, 96})->Args({1, 24, 96});
BENCHMARK(resize<k::parallel::bilinear_resize>)->Name("resize/parallel")->Args({32, 24, 96})->Args({1, 24, 96});
BENCHMARK(model_step)->Args({0, 64})->Args({1, 64})->Args({0, 96})->Args({1, 96})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
