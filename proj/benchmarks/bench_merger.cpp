#include <random>

#include <benchmark/benchmark.h>

#include "bvllm/merger.hpp"

namespace {

using namespace bvllm;

Tensor gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t = Tensor::zeros(rows, cols);
  for (double& v : t.data()) v = n(rng);
  return t;
}

void BM_BipartiteHalve(benchmark::State& state) {
  const Tensor tokens = gaussian(static_cast<std::size_t>(state.range(0)), 64, 3);
  for (auto _ : state) benchmark::DoNotOptimize(bipartite_halve(tokens));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_BipartiteHalve)->RangeMultiplier(4)->Range(16, 1024)->Complexity(benchmark::oNSquared);

void BM_EnforceBudget8192To1024(benchmark::State& state) {
  std::vector<Tensor> frames;
  for (std::size_t f = 0; f < 32; ++f) frames.push_back(gaussian(256, 32, f));
  for (auto _ : state) benchmark::DoNotOptimize(enforce_budget(frames, 1024));
}
BENCHMARK(BM_EnforceBudget8192To1024)->Unit(benchmark::kMillisecond);

void BM_FindDuplicateGroups(benchmark::State& state) {
  const Tensor rows = gaussian(static_cast<std::size_t>(state.range(0)), 40, 5);
  for (auto _ : state) benchmark::DoNotOptimize(find_duplicate_groups(rows, 0.9));
}
BENCHMARK(BM_FindDuplicateGroups)->Arg(8)->Arg(32)->Arg(128);

}  // namespace
