#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "bvllm/attention.hpp"
#include "bvllm/graph.hpp"
#include "bvllm/tensor.hpp"

namespace bvllm {

// Per-frame visual tokens: one [CLS] summary per frame plus M body tokens.
struct VideoTokens {
  Tensor cls;   // L x d
  Tensor body;  // L x M x d

  std::size_t frames() const { return cls.rows(); }
  std::size_t tokens_per_frame() const { return body.rank() == 3 ? body.shape()[1] : 0; }
  std::size_t dim() const { return cls.cols(); }

  // Throws DimensionError unless L >= 1, M >= 1 and the shapes agree.
  void validate() const;

  // L x ((M + 1) * d): each row is one frame as [cls; body] flattened.
  Tensor stacked() const;
  // Inverse of stacked(): rows of (M + 1) * d values split back into parts.
  static VideoTokens from_stacked(const Tensor& stacked, std::size_t tokens_per_frame);
};

// Pre-embedded text context, N x d.
struct TextContext {
  Tensor tokens;

  std::size_t length() const { return tokens.rows(); }
  std::size_t dim() const { return tokens.cols(); }
  void validate() const;
};

// Learnable seed embeddings of the L* selection queries.
struct QueryBank {
  Tensor embeddings;  // L* x d

  std::size_t count() const { return embeddings.rows(); }
};

enum class SelectionMode { soft, hard, deterministic };

std::string_view to_string(SelectionMode mode);
// Throws ConfigError on an unknown name.
SelectionMode parse_selection_mode(std::string_view name);

// Row-stochastic L* x L matrix S_tau.
struct SelectionMatrix {
  Tensor weights;
  double tau = 0.5;
  SelectionMode mode = SelectionMode::soft;

  // Per-row argmax (lowest index on ties).
  std::vector<std::size_t> argmax() const;
};

struct SelectorParams {
  QueryBank queries;
  AttentionStack net;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "queries", queries.embeddings);
    net.visit(prefix, f);
  }
};

inline constexpr double kDefaultTau = 0.5;

// Standard Gumbel noise, one independent draw per entry. Uniforms are clamped
// to [1e-12, 1 - 1e-12] before the logs.
Tensor sample_gumbel(std::size_t rows, std::size_t cols, Rng& rng);

// Adds sinusoidal temporal positions to cls rows (frame index as position).
Tensor add_temporal_positions(const Tensor& cls);

// Text-conditioned queries: the bank rows are run through the query
// transformer with the text joining self-attention and the [CLS] tokens as
// cross-attention memory. Returns an L* x d node.
Var generate_queries(const QueryBank& bank, Var text, Var cls, const AttentionStack& net);
Tensor generate_queries(const QueryBank& bank, const TextContext& text, const Tensor& cls,
                        const AttentionStack& net);

// queries · clsᵀ, optionally scaled by 1/sqrt(d).
Var selection_logits(Var queries, Var cls, bool scaled = false);
Tensor selection_logits(const Tensor& queries, const Tensor& cls, bool scaled = false);

// Graph form of the Gumbel-Softmax given pre-drawn noise. In hard mode the
// forward value is the one-hot of argmax(logits + noise) (or `forced_choice`
// when non-empty) and gradients pass through the soft rows. Deterministic
// mode ignores the noise.
Var gumbel_softmax(Var logits, double tau, SelectionMode mode, const Tensor& noise,
                   const std::vector<std::size_t>& forced_choice = {});
SelectionMatrix gumbel_softmax(const Tensor& logits, double tau, SelectionMode mode,
                               std::uint64_t seed);

// One-hot rows for the given column indices.
Tensor one_hot_rows(const std::vector<std::size_t>& columns, std::size_t width);

// Weighted combination of whole frames ([cls; body] rows of the stacked
// video). One-hot weight rows copy the source frame bit for bit.
Var select_frames(Var weights, Var stacked_frames);
// Returns L* x (M + 1) x d.
Tensor select_frames(const SelectionMatrix& selection, const VideoTokens& video);

}  // namespace bvllm
