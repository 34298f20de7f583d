// Serial reference loops against their OpenMP counterparts at desk scale.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "frozenseg/kernels.hpp"

using namespace frozenseg;

namespace {

Matrix filled(std::size_t rows, std::size_t cols, std::uint64_t seed, bool binary = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> u(0.0, 1.0);
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = binary ? (u(rng) > 0.5 ? 1.0 : 0.0) : u(rng);
  return m;
}

template <auto Kernel>
void gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = filled(n, 64, 1), b = filled(64, n, 2);
  Matrix out(n, n);
  for (auto _ : state) {
    Kernel(a, false, b, false, out, false);
    benchmark::DoNotOptimize(out.data().data());
  }
}

template <auto Kernel>
void aggregate(benchmark::State& state) {
  const auto pixels = static_cast<std::size_t>(state.range(0));
  const Matrix probs = filled(32, 9, 3), masks = filled(32, pixels, 4);
  Matrix out(8, pixels);
  for (auto _ : state) {
    Kernel(probs, 8, masks, out);
    benchmark::DoNotOptimize(out.data().data());
  }
}

template <auto Kernel>
void masked_mean(benchmark::State& state) {
  const auto pixels = static_cast<std::size_t>(state.range(0));
  const Matrix select = filled(32, pixels, 5, true), features = filled(pixels, 32, 6);
  Matrix out(32, 32);
  for (auto _ : state) {
    Kernel(select, features, out);
    benchmark::DoNotOptimize(out.data().data());
  }
}

template <auto Kernel>
void confusion(benchmark::State& state) {
  const auto pixels = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> label(-1, 7);
  std::vector<int> pred(pixels), gt(pixels);
  for (std::size_t p = 0; p < pixels; ++p) pred[p] = label(rng), gt[p] = label(rng);
  std::vector<std::int64_t> counts;
  for (auto _ : state) {
    Kernel(pred, gt, 8, counts);
    benchmark::DoNotOptimize(counts.data());
  }
}

}  // namespace

BENCHMARK(gemm<kernels::serial::gemm>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(gemm<kernels::parallel::gemm>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(aggregate<kernels::serial::aggregate_scores>)->Name("aggregate/serial")->Arg(4096)->Arg(65536);
BENCHMARK(aggregate<kernels::parallel::aggregate_scores>)->Name("aggregate/parallel")->Arg(4096)->Arg(65536);
BENCHMARK(masked_mean<kernels::serial::masked_mean>)->Name("masked_mean/serial")->Arg(64)->Arg(4096);
BENCHMARK(masked_mean<kernels::parallel::masked_mean>)->Name("masked_mean/parallel")->Arg(64)->Arg(4096);
BENCHMARK(confusion<kernels::serial::confusion>)->Name("confusion/serial")->Arg(4096)->Arg(262144);
BENCHMARK(confusion<kernels::parallel::confusion>)->Name("confusion/parallel")->Arg(4096)->Arg(262144);

BENCHMARK_MAIN();
