#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "bvllm/selector.hpp"

namespace bvllm {

struct SynthSpec {
  std::uint64_t seed = 0;
  std::size_t frames = 40;
  std::size_t tokens = 16;
  std::size_t dim = 32;
  std::vector<std::size_t> planted;  // 0-based frame indices
  double noise = 0.1;
  std::size_t text_tokens = 4;
  double body_spread = 0.5;
};

struct SynthInstance {
  VideoTokens video;
  TextContext text;
  std::vector<std::size_t> planted;  // sorted, unique
  Tensor relevant_centroid;          // 1 x d
  Tensor distractor_centroid;        // 1 x d
};

// Planted frames get [CLS] tokens near a "relevant" centroid that also
// generates the text rows; every other frame sits near a distractor centroid.
// Body tokens scatter around their frame's [CLS]. Centroid entries are
// N(0, 1); noise scales the per-token N(0, 1) perturbation.
SynthInstance synth_generate(const SynthSpec& spec);

// `count` distinct frames out of `frames`, sorted.
std::vector<std::size_t> random_planted(std::size_t frames, std::size_t count, std::uint64_t seed);

}  // namespace bvllm
