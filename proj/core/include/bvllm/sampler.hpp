#pragma once

#include <cstddef>
#include <vector>

#include "bvllm/attention.hpp"
#include "bvllm/graph.hpp"
#include "bvllm/selector.hpp"
#include "bvllm/tensor.hpp"

namespace bvllm {

// Learnable seeds of the R spatial queries sampled per frame.
struct SpatialQueryBank {
  Tensor embeddings;  // R x d

  std::size_t count() const { return embeddings.rows(); }
};

// Affine map into the language model feature space; no activation.
struct Projection {
  Tensor weight;  // d x d_llm
  Tensor bias;    // d_llm

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }

  static Projection identity(std::size_t d);
  static Projection random(std::size_t in, std::size_t out, Rng& rng);
};

// Optional learned 2-D positions for spatial keys: token i of a frame laid
// out on a rows x cols grid gets row_table[i / cols] + col_table[i % cols].
struct SpatialPositions {
  Tensor row_table;  // grid_rows x d
  Tensor col_table;  // grid_cols x d

  bool enabled() const { return !row_table.empty(); }
  std::size_t capacity() const { return row_table.rows() * col_table.rows(); }
};

struct SamplerParams {
  SpatialQueryBank queries;
  AttentionStack net;
  SpatialPositions positions;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "queries", queries.embeddings);
    net.visit(prefix, f);
    if (positions.enabled()) {
      f(prefix + "positions.rows", positions.row_table);
      f(prefix + "positions.cols", positions.col_table);
    }
  }
};

// Samples R tokens from the M body tokens of one frame: the spatial query
// bank runs through the sampler's query transformer with the frame tokens as
// cross-attention memory and the text joining self-attention.
Var spatial_sample(Var frame_tokens, Var text, const SamplerParams& params);
Tensor spatial_sample(const Tensor& frame_tokens, const TextContext& text, const SamplerParams& params);

Var project(Var tokens, const Projection& proj);
Tensor project(const Tensor& tokens, const Projection& proj);

// Row-concatenation of the projected frame blocks followed by the text rows.
// `text_proj` maps the text when its width differs from the visual blocks;
// pass nullptr when the widths already agree.
Var assemble_sequence(const std::vector<Var>& projected, Var text, const Projection* text_proj);

}  // namespace bvllm
