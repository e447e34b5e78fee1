#include "bvllm/selector.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bvllm/error.hpp"
#include "bvllm/ops.hpp"

namespace bvllm {

void VideoTokens::validate() const {
  if (cls.rank() != 2 || cls.rows() == 0 || cls.cols() == 0) {
    throw DimensionError("video cls tokens must be a non-empty L x d matrix, got " +
                         shape_string(cls.shape()));
  }
  if (body.rank() != 3 || body.shape()[1] == 0) {
    throw DimensionError("video body tokens must be L x M x d with M >= 1, got " +
                         shape_string(body.shape()));
  }
  if (body.shape()[0] != cls.rows() || body.shape()[2] != cls.cols()) {
    throw DimensionError("video cls " + shape_string(cls.shape()) + " and body " +
                         shape_string(body.shape()) + " disagree");
  }
}

Tensor VideoTokens::stacked() const {
  validate();
  const std::size_t L = frames(), M = tokens_per_frame(), d = dim();
  Tensor out = Tensor::zeros(L, (M + 1) * d);
  for (std::size_t l = 0; l < L; ++l) {
    auto dst = out.row(l);
    std::copy(cls.row(l).begin(), cls.row(l).end(), dst.begin());
    const auto src = body.data().subspan(l * M * d, M * d);
    std::copy(src.begin(), src.end(), dst.begin() + d);
  }
  return out;
}

VideoTokens VideoTokens::from_stacked(const Tensor& stacked, std::size_t tokens_per_frame) {
  const std::size_t L = stacked.rows();
  if (tokens_per_frame == 0 || stacked.cols() % (tokens_per_frame + 1) != 0) {
    throw DimensionError("stacked frame width " + std::to_string(stacked.cols()) +
                         " is not a multiple of M + 1 = " + std::to_string(tokens_per_frame + 1));
  }
  const std::size_t d = stacked.cols() / (tokens_per_frame + 1);
  VideoTokens v{Tensor::zeros(L, d), Tensor(Shape{L, tokens_per_frame, d})};
  for (std::size_t l = 0; l < L; ++l) {
    const auto src = stacked.row(l);
    std::copy(src.begin(), src.begin() + d, v.cls.row(l).begin());
    std::copy(src.begin() + d, src.end(), v.body.data().begin() + l * tokens_per_frame * d);
  }
  return v;
}

void TextContext::validate() const {
  if (tokens.rank() != 2 || tokens.rows() == 0 || tokens.cols() == 0) {
    throw DimensionError("text context must be a non-empty N x d matrix, got " +
                         shape_string(tokens.shape()));
  }
}

std::string_view to_string(SelectionMode mode) {
  switch (mode) {
    case SelectionMode::soft:
      return "soft";
    case SelectionMode::hard:
      return "hard";
    case SelectionMode::deterministic:
      return "deterministic";
  }
  return "soft";
}

SelectionMode parse_selection_mode(std::string_view name) {
  if (name == "soft") return SelectionMode::soft;
  if (name == "hard") return SelectionMode::hard;
  if (name == "deterministic") return SelectionMode::deterministic;
  throw ConfigError("unknown selection mode '" + std::string(name) +
                    "' (expected soft, hard or deterministic)");
}

std::vector<std::size_t> SelectionMatrix::argmax() const {
  std::vector<std::size_t> out(weights.rows());
  for (std::size_t i = 0; i < weights.rows(); ++i) {
    const auto r = weights.row(i);
    out[i] = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

Tensor sample_gumbel(std::size_t rows, std::size_t cols, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Tensor g = Tensor::zeros(rows, cols);
  for (double& v : g.data()) {
    const double u = std::clamp(uniform(rng), 1e-12, 1.0 - 1e-12);
    v = -std::log(-std::log(u));
  }
  return g;
}

Tensor add_temporal_positions(const Tensor& cls) {
  Tensor out = cls;
  const std::size_t d = cls.cols();
  for (std::size_t l = 0; l < cls.rows(); ++l) {
    for (std::size_t j = 0; j < d; ++j) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (j / 2)) / static_cast<double>(d));
      const double angle = static_cast<double>(l) * freq;
      out(l, j) += (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return out;
}

Var generate_queries(const QueryBank& bank, Var text, Var cls, const AttentionStack& net) {
  if (bank.count() == 0) throw ConfigError("query bank needs at least one query");
  if (bank.embeddings.cols() != net.dim) {
    throw ConfigError("query bank width " + std::to_string(bank.embeddings.cols()) +
                      " does not match the attention stack width " + std::to_string(net.dim));
  }
  Graph& g = text.graph();
  return run_qformer(net, g.param(bank.embeddings), text, cls);
}

Tensor generate_queries(const QueryBank& bank, const TextContext& text, const Tensor& cls,
                        const AttentionStack& net) {
  Graph g;
  return generate_queries(bank, g.constant(text.tokens), g.constant(cls), net).value();
}

Var selection_logits(Var queries, Var cls, bool scaled) {
  if (queries.cols() != cls.cols()) {
    throw DimensionError("selection logits: query width " + std::to_string(queries.cols()) +
                         " vs cls width " + std::to_string(cls.cols()));
  }
  const Var logits = ops::matmul_nt(queries, cls);
  if (!scaled) return logits;
  return ops::scale(logits, 1.0 / std::sqrt(static_cast<double>(queries.cols())));
}

Tensor selection_logits(const Tensor& queries, const Tensor& cls, bool scaled) {
  Graph g;
  return selection_logits(g.constant(queries), g.constant(cls), scaled).value();
}

Tensor one_hot_rows(const std::vector<std::size_t>& columns, std::size_t width) {
  Tensor out = Tensor::zeros(columns.size(), width);
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] >= width) throw DimensionError("one-hot column out of range");
    out(i, columns[i]) = 1.0;
  }
  return out;
}

Var gumbel_softmax(Var logits, double tau, SelectionMode mode, const Tensor& noise,
                   const std::vector<std::size_t>& forced_choice) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ConfigError("Gumbel-Softmax temperature must be positive, got " + std::to_string(tau));
  }
  Var perturbed = logits;
  if (mode != SelectionMode::deterministic) {
    if (noise.rows() != logits.rows() || noise.cols() != logits.cols()) {
      throw DimensionError("Gumbel noise " + shape_string(noise.shape()) + " does not match logits " +
                           shape_string(logits.value().shape()));
    }
    perturbed = ops::add_constant(logits, noise);
  }
  const Var soft = ops::softmax_rows(ops::scale(perturbed, 1.0 / tau));
  if (mode != SelectionMode::hard) return soft;

  std::vector<std::size_t> choice = forced_choice;
  if (choice.empty()) {
    const Tensor& z = perturbed.value();
    choice.resize(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) {
      const auto r = z.row(i);
      choice[i] = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
    }
  }
  if (choice.size() != logits.rows()) throw DimensionError("forced choice has the wrong row count");
  return ops::straight_through(one_hot_rows(choice, logits.cols()), soft);
}

SelectionMatrix gumbel_softmax(const Tensor& logits, double tau, SelectionMode mode,
                               std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  const Tensor noise = sample_gumbel(logits.rows(), logits.cols(), rng);
  Graph g;
  const Var s = gumbel_softmax(g.constant(logits), tau, mode, noise);
  return SelectionMatrix{s.value(), tau, mode};
}

Var select_frames(Var weights, Var stacked_frames) {
  if (weights.cols() != stacked_frames.rows()) {
    throw DimensionError("selection matrix has " + std::to_string(weights.cols()) +
                         " columns but the video has " + std::to_string(stacked_frames.rows()) +
                         " frames");
  }
  return ops::mix_rows(weights, stacked_frames);
}

Tensor select_frames(const SelectionMatrix& selection, const VideoTokens& video) {
  Graph g;
  const Var out = select_frames(g.constant(selection.weights), g.constant(video.stacked()));
  return out.value().reshaped({selection.weights.rows(), video.tokens_per_frame() + 1, video.dim()});
}

}  // namespace bvllm
