#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "bvllm/config.hpp"
#include "bvllm/sampler.hpp"
#include "bvllm/selector.hpp"

namespace bvllm {

// All learnable state of the pipeline. Tensor names are namespaced
// "selector.", "sampler." and "projector." and are stable across versions of
// the checkpoint format.
struct ModelParams {
  SelectorParams selector;
  SamplerParams sampler;
  Projection visual;  // d -> d_llm
  Projection text;    // d -> d_llm, used only when d != d_llm

  static ModelParams init(const PipelineConfig& cfg, std::uint64_t seed);
  // Every projection and attention weight zero; banks still random.
  static ModelParams zero_networks(const PipelineConfig& cfg, std::uint64_t seed);

  template <typename F>
  void visit(F&& f) {
    selector.visit("selector.", f);
    sampler.visit("sampler.", f);
    f(std::string("projector.visual.weight"), visual.weight);
    f(std::string("projector.visual.bias"), visual.bias);
    f(std::string("projector.text.weight"), text.weight);
    f(std::string("projector.text.bias"), text.bias);
  }

  // name -> tensor pointer, in visit order.
  std::vector<std::pair<std::string, Tensor*>> named_tensors();

  // Throws ConfigError when a tensor is missing, misshapen or non-finite.
  void validate(const PipelineConfig& cfg) const;
};

// Checkpoint directory: manifest.json plus one BVTK file per tensor.
//   { "format": "bvllm-checkpoint", "version": 1,
//     "dim": d, "llm_dim": ..., "layers": ..., "heads": ...,
//     "frames_to_select": L*, "tokens_per_frame": R,
//     "tensors": { "<name>": "<file>.bvtk", ... } }
void save_checkpoint(const std::filesystem::path& dir, ModelParams& params, const PipelineConfig& cfg);
// Validates that every expected tensor is listed, present and correctly shaped.
ModelParams load_checkpoint(const std::filesystem::path& dir, const PipelineConfig& cfg);

}  // namespace bvllm
