#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "bvllm/selector.hpp"

namespace bvllm {

// Every pipeline hyperparameter. The defaults here are the single source of
// truth for the CLI help text.
struct PipelineConfig {
  std::size_t frames_to_select = 8;  // L*
  std::size_t tokens_per_frame = 8;  // R, spatial tokens sampled per frame
  std::size_t theta = 2048;          // visual token budget
  double tau = kDefaultTau;
  double gamma = 0.9;
  SelectionMode mode = SelectionMode::soft;
  std::uint64_t seed = 0;
  std::size_t dim = 32;
  std::size_t llm_dim = 128;
  std::size_t layers = 2;
  std::size_t heads = 4;
  bool scale_logits = false;
  bool temporal_positions = false;
  bool spatial_positions = false;
  std::size_t spatial_grid_rows = 16;
  std::size_t spatial_grid_cols = 16;

  // Throws ConfigError naming the offending field.
  void validate() const;

  std::string to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static PipelineConfig from_json(std::string_view text);

  static PipelineConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

}  // namespace bvllm
