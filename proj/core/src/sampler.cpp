#include "bvllm/sampler.hpp"

#include <cmath>
#include <string>

#include "bvllm/error.hpp"
#include "bvllm/ops.hpp"

namespace bvllm {

Projection Projection::identity(std::size_t d) {
  return Projection{Tensor::identity(d), Tensor(Shape{d})};
}

Projection Projection::random(std::size_t in, std::size_t out, Rng& rng) {
  Projection p{Tensor::zeros(in, out), Tensor(Shape{out})};
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
  for (double& v : p.weight.data()) v = normal(rng);
  return p;
}

Var spatial_sample(Var frame_tokens, Var text, const SamplerParams& params) {
  if (params.queries.count() == 0) throw ConfigError("spatial query bank needs at least one query");
  if (frame_tokens.cols() != params.net.dim || params.queries.embeddings.cols() != params.net.dim) {
    throw ConfigError("spatial sampler width " + std::to_string(params.net.dim) +
                      " does not match frame tokens of width " + std::to_string(frame_tokens.cols()));
  }
  if (params.queries.count() > frame_tokens.rows()) {
    throw ConfigError("cannot sample R = " + std::to_string(params.queries.count()) + " tokens from a frame of M = " +
                      std::to_string(frame_tokens.rows()) + " tokens (R must not exceed M)");
  }
  Graph& g = frame_tokens.graph();
  Var memory = frame_tokens;
  if (params.positions.enabled()) {
    const std::size_t m = frame_tokens.rows();
    const std::size_t cols = params.positions.col_table.rows();
    if (m > params.positions.capacity()) {
      throw ConfigError("frame has " + std::to_string(m) + " tokens but the position grid holds " +
                        std::to_string(params.positions.capacity()));
    }
    std::vector<std::vector<std::size_t>> row_pick(m), col_pick(m);
    for (std::size_t i = 0; i < m; ++i) {
      row_pick[i] = {i / cols};
      col_pick[i] = {i % cols};
    }
    // Single-member groups act as a differentiable gather.
    const Var pos = ops::add(ops::group_mean_rows(g.param(params.positions.row_table), row_pick),
                             ops::group_mean_rows(g.param(params.positions.col_table), col_pick));
    memory = ops::add(frame_tokens, pos);
  }
  return run_qformer(params.net, g.param(params.queries.embeddings), text, memory);
}

Tensor spatial_sample(const Tensor& frame_tokens, const TextContext& text, const SamplerParams& params) {
  Graph g;
  return spatial_sample(g.constant(frame_tokens), g.constant(text.tokens), params).value();
}

Var project(Var tokens, const Projection& proj) {
  if (tokens.cols() != proj.in_dim()) {
    throw DimensionError("projection expects width " + std::to_string(proj.in_dim()) + ", got " +
                         std::to_string(tokens.cols()));
  }
  Graph& g = tokens.graph();
  return ops::add_row(ops::matmul(tokens, g.param(proj.weight)), g.param(proj.bias));
}

Tensor project(const Tensor& tokens, const Projection& proj) {
  Graph g;
  return project(g.constant(tokens), proj).value();
}

Var assemble_sequence(const std::vector<Var>& projected, Var text, const Projection* text_proj) {
  const Var text_rows = text_proj ? project(text, *text_proj) : text;
  std::vector<Var> parts;
  parts.reserve(projected.size() + 1);
  for (const Var& p : projected)
    if (p.rows() > 0) parts.push_back(p);
  parts.push_back(text_rows);
  return ops::concat_rows(parts);
}

}  // namespace bvllm
