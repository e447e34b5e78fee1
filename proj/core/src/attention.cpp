#include "bvllm/attention.hpp"

#include <cmath>

#include "bvllm/error.hpp"
#include "bvllm/ops.hpp"

namespace bvllm {

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

namespace {

Var linear(Var x, const Tensor& w, const Tensor& b) {
  Graph& g = x.graph();
  return ops::add_row(ops::matmul(x, g.param(w)), g.param(b));
}

AttentionWeights attention_weights(std::size_t d, Rng* rng) {
  auto weight = [&] {
    Tensor t = Tensor::zeros(d, d);
    if (rng) {
      std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
      for (double& v : t.data()) v = normal(*rng);
    }
    return t;
  };
  auto bias = [&] { return Tensor(Shape{d}); };
  AttentionWeights w;
  w.wq = weight();
  w.bq = bias();
  w.wk = weight();
  w.bk = bias();
  w.wv = weight();
  w.bv = bias();
  w.wo = weight();
  w.bo = bias();
  return w;
}

QFormerLayer make_layer(std::size_t d, Rng* rng) {
  auto ones = [d] { return Tensor(Shape{d}, std::vector<double>(d, 1.0)); };
  auto zeros = [](std::size_t n) { return Tensor(Shape{n}); };
  auto dense = [&](std::size_t in, std::size_t out) {
    Tensor t = Tensor::zeros(in, out);
    if (rng) {
      std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
      for (double& v : t.data()) v = normal(*rng);
    }
    return t;
  };
  QFormerLayer layer;
  layer.ln_self_gain = ones();
  layer.ln_self_bias = zeros(d);
  layer.self_attn = attention_weights(d, rng);
  layer.ln_cross_gain = ones();
  layer.ln_cross_bias = zeros(d);
  layer.cross_attn = attention_weights(d, rng);
  layer.ln_mlp_gain = ones();
  layer.ln_mlp_bias = zeros(d);
  layer.mlp_w1 = dense(d, 4 * d);
  layer.mlp_b1 = zeros(4 * d);
  layer.mlp_w2 = dense(4 * d, d);
  layer.mlp_b2 = zeros(d);
  return layer;
}

}  // namespace

Var attention(Var query, Var key, Var value, const AttentionWeights& weights, std::size_t heads,
              std::vector<Tensor>* head_weights) {
  const std::size_t d = query.cols();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention width " + std::to_string(d) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (key.cols() != d || value.cols() != d) {
    throw DimensionError("attention query/key/value widths disagree");
  }
  if (key.rows() != value.rows()) {
    throw DimensionError("attention keys and values have different row counts");
  }
  const Var q = linear(query, weights.wq, weights.bq);
  const Var k = linear(key, weights.wk, weights.bk);
  const Var v = linear(value, weights.wv, weights.bv);

  const std::size_t head_dim = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> outputs;
  outputs.reserve(heads);
  if (head_weights) head_weights->clear();
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t lo = h * head_dim, hi = lo + head_dim;
    const Var scores = ops::scale(ops::matmul_nt(ops::slice_cols(q, lo, hi), ops::slice_cols(k, lo, hi)), scale);
    const Var w = ops::softmax_rows(scores);
    if (head_weights) head_weights->push_back(w.value());
    outputs.push_back(ops::matmul(w, ops::slice_cols(v, lo, hi)));
  }
  const Var joined = heads == 1 ? outputs.front() : ops::concat_cols(outputs);
  return linear(joined, weights.wo, weights.bo);
}

AttentionStack AttentionStack::zeros(std::size_t dim, std::size_t layers, std::size_t heads) {
  AttentionStack s;
  s.dim = dim;
  s.heads = heads;
  for (std::size_t i = 0; i < layers; ++i) s.layers.push_back(make_layer(dim, nullptr));
  return s;
}

AttentionStack AttentionStack::random(std::size_t dim, std::size_t layers, std::size_t heads,
                                      Rng& rng) {
  AttentionStack s;
  s.dim = dim;
  s.heads = heads;
  for (std::size_t i = 0; i < layers; ++i) s.layers.push_back(make_layer(dim, &rng));
  return s;
}

void AttentionStack::validate() const {
  if (layers.empty()) throw ConfigError("attention stack needs at least one layer");
  if (dim == 0 || heads == 0 || dim % heads != 0) {
    throw ConfigError("attention stack width " + std::to_string(dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const QFormerLayer reference = make_layer(dim, nullptr);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    QFormerLayer layer = layers[i];
    QFormerLayer ref = reference;
    std::vector<Shape> expected;
    ref.visit("", [&](const std::string&, Tensor& t) { expected.push_back(t.shape()); });
    std::size_t idx = 0;
    layer.visit("layers." + std::to_string(i) + ".", [&](const std::string& name, Tensor& t) {
      if (t.size() != shape_size(expected[idx])) {
        throw ConfigError("parameter " + name + " has shape " + shape_string(t.shape()) +
                          ", expected " + shape_string(expected[idx]));
      }
      if (!t.all_finite()) throw ConfigError("parameter " + name + " has non-finite entries");
      ++idx;
    });
  }
}

Var run_qformer(const AttentionStack& net, Var queries, Var context, Var memory) {
  const std::size_t d = net.dim;
  if (queries.cols() != d || context.cols() != d || memory.cols() != d) {
    throw ConfigError("query transformer width " + std::to_string(d) + " does not match inputs (" +
                      std::to_string(queries.cols()) + ", " + std::to_string(context.cols()) +
                      ", " + std::to_string(memory.cols()) + ")");
  }
  Graph& g = queries.graph();
  const std::size_t nq = queries.rows();
  Var x = queries;
  for (const QFormerLayer& layer : net.layers) {
    const Var joint = ops::concat_rows({x, context});
    const Var joint_norm = ops::layernorm(joint, g.param(layer.ln_self_gain), g.param(layer.ln_self_bias));
    const Var self = attention(joint_norm, joint_norm, joint_norm, layer.self_attn, net.heads);
    x = ops::add(x, ops::slice_rows(self, 0, nq));

    const Var cross_in = ops::layernorm(x, g.param(layer.ln_cross_gain), g.param(layer.ln_cross_bias));
    x = ops::add(x, attention(cross_in, memory, memory, layer.cross_attn, net.heads));

    const Var mlp_in = ops::layernorm(x, g.param(layer.ln_mlp_gain), g.param(layer.ln_mlp_bias));
    const Var hidden = ops::gelu(linear(mlp_in, layer.mlp_w1, layer.mlp_b1));
    x = ops::add(x, linear(hidden, layer.mlp_w2, layer.mlp_b2));
  }
  return x;
}

}  // namespace bvllm
