// OpenMP kernels against their serial references.
//
//   bench_kernels --benchmark_filter=conv

#include <benchmark/benchmark.h>

#include "ccfg/kernels.hpp"
#include "ccfg/metrics.hpp"
#include "ccfg/random.hpp"

using namespace ccfg;

namespace {

Tensor noise(int n, int c, int h, int w, std::uint64_t seed) {
  Tensor t(n, c, h, w);
  Engine rng(seed);
  for (double& v : t.data) v = standard_normal(rng);
  return t;
}

struct ConvCase {
  Tensor weight, bias, x, dy;
  kernels::Conv3x3 conv;

  ConvCase(int batch, int cin, int cout, int size)
      : weight(noise(1, cout * cin * 9, 1, 1, 1)),
        bias(noise(1, cout, 1, 1, 2)),
        x(noise(batch, cin, size, size, 3)),
        dy(noise(batch, cout, size, size, 4)),
        conv{cin, cout, weight.data.data(), bias.data.data()} {}
};

// args: batch, c_in, c_out, size
void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({16, 12, 12, 32})->Args({16, 24, 24, 16})->Args({16, 48, 48, 8});
}

template <bool Parallel>
void BM_conv_forward(benchmark::State& state) {
  ConvCase c(state.range(0), state.range(1), state.range(2), state.range(3));
  Tensor y;
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::conv3x3_forward(c.conv, c.x, y);
    } else {
      kernels::serial::conv3x3_forward(c.conv, c.x, y);
    }
    benchmark::DoNotOptimize(y.data.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_conv_backward(benchmark::State& state) {
  ConvCase c(state.range(0), state.range(1), state.range(2), state.range(3));
  Tensor dx;
  std::vector<double> dw(c.weight.size()), db(c.bias.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::conv3x3_backward(c.conv, c.x, c.dy, &dx, dw.data(), db.data());
    } else {
      kernels::serial::conv3x3_backward(c.conv, c.x, c.dy, &dx, dw.data(), db.data());
    }
    benchmark::DoNotOptimize(dx.data.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

PredictionSet prediction_set(int timestamps, int members) {
  PredictionSet p;
  p.predictions = noise(timestamps, members, 32, 32, 5);
  p.truths = noise(timestamps, 1, 32, 32, 6);
  return p;
}

template <bool Parallel>
void BM_t_rmse(benchmark::State& state) {
  const PredictionSet p = prediction_set(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(Parallel ? t_rmse(p) : serial::t_rmse(p));
}

template <bool Parallel>
void BM_crps(benchmark::State& state) {
  const PredictionSet p = prediction_set(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(Parallel ? crps_timestamps(p) : serial::crps_timestamps(p));
  }
}

}  // namespace

BENCHMARK(BM_conv_forward<true>)->Name("conv_forward/omp")->Apply(conv_args);
BENCHMARK(BM_conv_forward<false>)->Name("conv_forward/serial")->Apply(conv_args);
BENCHMARK(BM_conv_backward<true>)->Name("conv_backward/omp")->Apply(conv_args);
BENCHMARK(BM_conv_backward<false>)->Name("conv_backward/serial")->Apply(conv_args);
BENCHMARK(BM_t_rmse<true>)->Name("t_rmse/omp")->Args({500, 1})->Args({100, 16});
BENCHMARK(BM_t_rmse<false>)->Name("t_rmse/serial")->Args({500, 1})->Args({100, 16});
BENCHMARK(BM_crps<true>)->Name("crps/omp")->Args({100, 4})->Args({100, 16});
BENCHMARK(BM_crps<false>)->Name("crps/serial")->Args({100, 4})->Args({100, 16});

BENCHMARK_MAIN();
