// Serial reference vs OpenMP kernels at the shapes training actually uses:
// a full batch of samples times one hidden layer.

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "neurozip/data.hpp"
#include "neurozip/evaluation.hpp"
#include "neurozip/kernels.hpp"
#include "neurozip/models.hpp"
#include "neurozip/random.hpp"

namespace {

using namespace neurozip;
namespace kernels = neurozip::kernels;

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
  auto rng = make_engine({seed});
  std::vector<double> v(n);
  for (double& x : v) x = uniform(rng, -1.0, 1.0);
  return v;
}

// args: rows (samples), threads (parallel only)
constexpr std::size_t kWidth = 20;

void BM_MatmulSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = filled(n * kWidth, 1), b = filled(kWidth * kWidth, 2);
  std::vector<double> c(n * kWidth);
  for (auto _ : state) {
    kernels::serial::matmul(a, b, c, n, kWidth, kWidth);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * kWidth * kWidth));
}

void BM_MatmulParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  kernels::set_max_threads(static_cast<int>(state.range(1)));
  const auto a = filled(n * kWidth, 1), b = filled(kWidth * kWidth, 2);
  std::vector<double> c(n * kWidth);
  for (auto _ : state) {
    kernels::matmul(a, b, c, n, kWidth, kWidth);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * kWidth * kWidth));
  kernels::set_max_threads(0);
}

// weight gradient: dW += X^T dY
void BM_MatmulTnSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = filled(n * kWidth, 3), b = filled(n * kWidth, 4);
  std::vector<double> c(kWidth * kWidth);
  for (auto _ : state) {
    kernels::serial::matmul_tn_add(a, b, c, n, kWidth, kWidth);
    benchmark::DoNotOptimize(c.data());
  }
}

void BM_MatmulTnParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  kernels::set_max_threads(static_cast<int>(state.range(1)));
  const auto a = filled(n * kWidth, 3), b = filled(n * kWidth, 4);
  std::vector<double> c(kWidth * kWidth);
  for (auto _ : state) {
    kernels::matmul_tn_add(a, b, c, n, kWidth, kWidth);
    benchmark::DoNotOptimize(c.data());
  }
  kernels::set_max_threads(0);
}

double tanh_fn(double x) { return std::tanh(x); }

void BM_MapSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto in = filled(n * kWidth, 5);
  std::vector<double> out(in.size());
  for (auto _ : state) {
    kernels::serial::map(in, out, tanh_fn);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_MapParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  kernels::set_max_threads(static_cast<int>(state.range(1)));
  const auto in = filled(n * kWidth, 5);
  std::vector<double> out(in.size());
  for (auto _ : state) {
    kernels::map(in, out, tanh_fn);
    benchmark::DoNotOptimize(out.data());
  }
  kernels::set_max_threads(0);
}

// whole-dataset scoring, per-trajectory parallel
void BM_Evaluate(benchmark::State& state) {
  GeneratorConfig gen;
  gen.counts = {4, 4, 4};
  static const auto data = generate_dataset(gen);
  NeuroZipModel model;
  model.zip = {0.4, 0.3, 0.3, 0.5, 0.2, 0.3};
  model.mlp = make_mlp(20, 4, Activation::tanh, 1, false);
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state) {
    const EvalReport r = evaluate(model, data, FitMode::neuro_zip, threads);
    benchmark::DoNotOptimize(r.mse_p);
  }
}

void sizes(benchmark::internal::Benchmark* b) {
  for (int rows : {512, 6000, 30000}) b->Args({rows});
}

void sizes_threads(benchmark::internal::Benchmark* b) {
  for (int rows : {512, 6000, 30000}) {
    for (int threads : {1, 2, 4}) b->Args({rows, threads});
  }
}

}  // namespace

BENCHMARK(BM_MatmulSerial)->Apply(sizes);
BENCHMARK(BM_MatmulParallel)->Apply(sizes_threads)->UseRealTime();
BENCHMARK(BM_MatmulTnSerial)->Apply(sizes);
BENCHMARK(BM_MatmulTnParallel)->Apply(sizes_threads)->UseRealTime();
BENCHMARK(BM_MapSerial)->Apply(sizes);
BENCHMARK(BM_MapParallel)->Apply(sizes_threads)->UseRealTime();
BENCHMARK(BM_Evaluate)->Arg(1)->Arg(2)->Arg(4)->UseRealTime();

BENCHMARK_MAIN();
