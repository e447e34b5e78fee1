#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "bvllm/graph.hpp"
#include "bvllm/tensor.hpp"

namespace bvllm {

using Rng = std::mt19937_64;

// Independent generator for a (seed, stream) pair.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

// Projections of one multi-head attention block. Weights are d x d, biases d.
struct AttentionWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "wq", wq);
    f(prefix + "bq", bq);
    f(prefix + "wk", wk);
    f(prefix + "bk", bk);
    f(prefix + "wv", wv);
    f(prefix + "bv", bv);
    f(prefix + "wo", wo);
    f(prefix + "bo", bo);
  }
};

// Multi-head scaled dot-product attention. Each input is projected, split
// into `heads` column blocks scored with scale 1/sqrt(d/heads), softmaxed per
// row, concatenated and mixed by the output projection.
// When `head_weights` is non-null it receives one a x b weight matrix per head.
Var attention(Var query, Var key, Var value, const AttentionWeights& weights, std::size_t heads,
              std::vector<Tensor>* head_weights = nullptr);

// One pre-norm query-transformer layer:
//   x += SelfAttn(LN([x; context]))[query rows]
//   x += CrossAttn(LN(x), memory)
//   x += MLP(LN(x))             (hidden 4d, GELU)
struct QFormerLayer {
  Tensor ln_self_gain, ln_self_bias;
  AttentionWeights self_attn;
  Tensor ln_cross_gain, ln_cross_bias;
  AttentionWeights cross_attn;
  Tensor ln_mlp_gain, ln_mlp_bias;
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "ln_self.gain", ln_self_gain);
    f(prefix + "ln_self.bias", ln_self_bias);
    self_attn.visit(prefix + "self_attn.", f);
    f(prefix + "ln_cross.gain", ln_cross_gain);
    f(prefix + "ln_cross.bias", ln_cross_bias);
    cross_attn.visit(prefix + "cross_attn.", f);
    f(prefix + "ln_mlp.gain", ln_mlp_gain);
    f(prefix + "ln_mlp.bias", ln_mlp_bias);
    f(prefix + "mlp.w1", mlp_w1);
    f(prefix + "mlp.b1", mlp_b1);
    f(prefix + "mlp.w2", mlp_w2);
    f(prefix + "mlp.b2", mlp_b2);
  }
};

// Parameters of a small query transformer. The frame selector and the
// spatial sampler each own one; they never share parameters.
struct AttentionStack {
  std::size_t dim = 0;
  std::size_t heads = 0;
  std::vector<QFormerLayer> layers;

  // All projection weights and biases zero, layernorm gains one.
  static AttentionStack zeros(std::size_t dim, std::size_t layers, std::size_t heads);
  // Weights ~ N(0, 1/fan_in), biases zero, layernorm gains one.
  static AttentionStack random(std::size_t dim, std::size_t layers, std::size_t heads, Rng& rng);

  // Throws ConfigError on zero layers, dim % heads != 0, bad shapes or
  // non-finite entries.
  void validate() const;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < layers.size(); ++i)
      layers[i].visit(prefix + "layers." + std::to_string(i) + ".", f);
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    const_cast<AttentionStack*>(this)->visit(
        prefix, [&](const std::string& name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
  }
};

// Runs `queries` through every layer. `context` rows join the queries in
// self-attention only (they are not updated); `memory` supplies the
// cross-attention keys and values.
Var run_qformer(const AttentionStack& net, Var queries, Var context, Var memory);

}  // namespace bvllm
