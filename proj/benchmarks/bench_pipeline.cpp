#include <benchmark/benchmark.h>

#include "bvllm/model.hpp"
#include "bvllm/ops.hpp"
#include "bvllm/pipeline.hpp"
#include "bvllm/synth.hpp"

namespace {

using namespace bvllm;

// Args: frames L, body tokens M.
void BM_PipelineHardInference(benchmark::State& state) {
  SynthSpec spec;
  spec.frames = static_cast<std::size_t>(state.range(0));
  spec.tokens = static_cast<std::size_t>(state.range(1));
  spec.planted = random_planted(spec.frames, 4, 0);
  const SynthInstance inst = synth_generate(spec);
  PipelineConfig cfg;
  cfg.mode = SelectionMode::hard;
  cfg.theta = 32;
  const ModelParams params = ModelParams::init(cfg, 1);
  for (auto _ : state) {
    PipelineOutput out = run(inst.video, inst.text, params, cfg);
    benchmark::DoNotOptimize(out.sequence);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(spec.frames * spec.tokens));
}
BENCHMARK(BM_PipelineHardInference)->Args({40, 16})->Args({40, 64})->Args({128, 64})->Unit(benchmark::kMillisecond);

void BM_PipelineForwardBackward(benchmark::State& state) {
  SynthSpec spec;
  spec.frames = 40;
  spec.tokens = 16;
  spec.planted = random_planted(spec.frames, 4, 0);
  const SynthInstance inst = synth_generate(spec);
  PipelineConfig cfg;
  cfg.theta = 32;
  const ModelParams params = ModelParams::init(cfg, 1);
  for (auto _ : state) {
    Graph g;
    const GraphRun run = run_graph(g, inst.video, inst.text, params, cfg);
    g.backward(ops::sum(run.sequence));
    benchmark::DoNotOptimize(g.grad_of(params.selector.queries.embeddings));
  }
}
BENCHMARK(BM_PipelineForwardBackward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
