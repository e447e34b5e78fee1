#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bvllm/config.hpp"
#include "bvllm/graph.hpp"
#include "bvllm/selector.hpp"
#include "bvllm/synth.hpp"

namespace bvllm {

// The planted-frame task: each instance plants `planted` random frames near
// the text centroid.
struct ToyTask {
  std::size_t frames = 40;
  std::size_t tokens = 4;
  std::size_t dim = 32;
  std::size_t planted = 4;
  std::size_t text_tokens = 4;
  double noise = 0.1;
};

struct TrainOptions {
  std::size_t steps = 2000;
  double lr = 3e-3;
  std::uint64_t seed = 0;
  std::size_t batch = 8;
  std::size_t eval_size = 32;
  std::size_t eval_every = 100;
  ToyTask task;
};

struct TrainPoint {
  std::size_t step = 0;
  double loss = 0;
  double accuracy = 0;
};

struct TrainReport {
  std::vector<TrainPoint> curve;  // evaluation batch, fixed across steps
  double final_loss = 0;
  double final_accuracy = 0;

  std::string to_json() const;
};

// Instance `index` of the stream drawn from `seed`.
SynthInstance toy_instance(const ToyTask& task, std::uint64_t seed, std::size_t index);

// Cross-entropy between each perspective's soft selection row and the uniform
// distribution over the planted frames, averaged over perspectives.
Var selection_loss(const SelectorParams& params, const PipelineConfig& cfg,
                   const SynthInstance& instance, const Tensor& noise, Graph& graph);

struct SelectionEval {
  double loss = 0;
  double accuracy = 0;  // fraction of hard selections inside the planted set
};

SelectionEval evaluate_selection(const SelectorParams& params, const PipelineConfig& cfg,
                                 const std::vector<SynthInstance>& instances,
                                 std::uint64_t noise_seed);

// Plain Adam over a fixed list of tensors.
class Adam {
 public:
  Adam(std::vector<Tensor*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  void step(const std::vector<Tensor>& grads);

 private:
  std::vector<Tensor*> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

// Trains the query bank and attention stack of `params` in place. Throws
// TrainingError when the loss stops being finite.
TrainReport train_toy(SelectorParams& params, const PipelineConfig& cfg, const TrainOptions& options);

}  // namespace bvllm
