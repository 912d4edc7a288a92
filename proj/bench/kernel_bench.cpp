#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "medtransport/kernels.hpp"

namespace {

struct Inputs {
  std::vector<double> x, means, mass, out;
};

Inputs make(std::size_t rows, std::size_t points) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  Inputs in;
  in.x.resize(rows);
  in.means.resize(points);
  for (double& v : in.x) v = z(rng);
  for (double& v : in.means) v = z(rng);
  in.mass.assign(points, 1.0 / static_cast<double>(points));
  in.out.resize(rows);
  return in;
}

template <auto Kernel>
void mixture(benchmark::State& state) {
  auto in = make(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) {
    Kernel(in.x, in.means, 0.5, in.out);
    benchmark::DoNotOptimize(in.out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}

template <auto Kernel>
void marginalize(benchmark::State& state) {
  auto in = make(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) {
    Kernel(in.x, 2.5, in.means, in.mass, in.out);
    benchmark::DoNotOptimize(in.out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}

}  // namespace

using namespace medtransport::kernels;

BENCHMARK(mixture<serial::gaussian_mixture_density>)->Name("mixture/serial")->Args({2500, 1000});
BENCHMARK(mixture<omp::gaussian_mixture_density>)->Name("mixture/omp")->Args({2500, 1000})->UseRealTime();
BENCHMARK(marginalize<serial::marginalize_logistic>)->Name("marginalize/serial")->Args({2500, 1000});
BENCHMARK(marginalize<omp::marginalize_logistic>)->Name("marginalize/omp")->Args({2500, 1000})->UseRealTime();

BENCHMARK_MAIN();
