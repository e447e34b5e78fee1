#include <random>

#include <benchmark/benchmark.h>

#include "bvllm/selector.hpp"

namespace {

using namespace bvllm;

void BM_GumbelSoftmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto mode = static_cast<SelectionMode>(state.range(1));
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor logits = Tensor::zeros(rows, 256);
  for (double& v : logits.data()) v = n(rng);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(gumbel_softmax(logits, 0.5, mode, seed++));
}
BENCHMARK(BM_GumbelSoftmax)
    ->ArgsProduct({{8, 32}, {static_cast<int>(SelectionMode::soft), static_cast<int>(SelectionMode::hard)}});

}  // namespace
