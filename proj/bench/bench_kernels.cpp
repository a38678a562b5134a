// Serial reference kernels against the OpenMP kernels, on the shapes the
// detector sees during training (batch 64, 240 samples).

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ctsat/kernels.hpp"

using namespace ctsat::kernels;

namespace {

struct Buffers {
    ConvShape s;
    std::vector<double> x, w, b, y, dx, dw, db;
    explicit Buffers(const ConvShape& shape) : s(shape) {
        std::mt19937_64 rng(1);
        std::normal_distribution<double> n;
        auto fill = [&](std::vector<double>& v, std::size_t size) {
            v.resize(size);
            for (auto& e : v) e = n(rng);
        };
        fill(x, s.batch * s.in_ch * s.length);
        fill(w, s.out_ch * s.in_ch * s.kernel);
        fill(b, s.out_ch);
        fill(y, s.batch * s.out_ch * s.length);
        dx.resize(x.size());
        dw.resize(w.size());
        db.resize(b.size());
    }
};

ConvShape shape_of(const benchmark::State& st) {
    return {64, static_cast<std::size_t>(st.range(0)), 16, static_cast<std::size_t>(st.range(1)), 240};
}

template <auto Fn>
void forward(benchmark::State& st) {
    Buffers m(shape_of(st));
    for (auto _ : st) {
        Fn(m.s, m.x.data(), m.w.data(), m.b.data(), m.y.data());
        benchmark::DoNotOptimize(m.y.data());
    }
    st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(m.y.size()));
}

template <auto Fn>
void backward_input(benchmark::State& st) {
    Buffers m(shape_of(st));
    for (auto _ : st) {
        Fn(m.s, m.y.data(), m.w.data(), m.dx.data());
        benchmark::DoNotOptimize(m.dx.data());
    }
}

template <auto Fn>
void backward_weights(benchmark::State& st) {
    Buffers m(shape_of(st));
    for (auto _ : st) {
        Fn(m.s, m.x.data(), m.y.data(), m.dw.data(), m.db.data());
        benchmark::DoNotOptimize(m.dw.data());
    }
}

void shapes(benchmark::internal::Benchmark* b) {
    b->Args({1, 5})->Args({8, 9})->Args({16, 5})->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK(forward<reference::conv1d_forward>)->Name("forward/serial")->Apply(shapes);
BENCHMARK(forward<conv1d_forward>)->Name("forward/parallel")->Apply(shapes);
BENCHMARK(backward_input<reference::conv1d_backward_input>)->Name("backward_input/serial")->Apply(shapes);
BENCHMARK(backward_input<conv1d_backward_input>)->Name("backward_input/parallel")->Apply(shapes);
BENCHMARK(backward_weights<reference::conv1d_backward_weights>)->Name("backward_weights/serial")->Apply(shapes);
BENCHMARK(backward_weights<conv1d_backward_weights>)->Name("backward_weights/parallel")->Apply(shapes);

int main(int argc, char** argv) {
    benchmark::Initialize(&argc, argv);
    benchmark::AddCustomContext("openmp", parallel_enabled() ? "on" : "off");
    benchmark::AddCustomContext("threads", std::to_string(max_threads()));
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
