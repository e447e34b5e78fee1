#include "bvllm/synth.hpp"

#include <algorithm>
#include <numeric>

#include "bvllm/error.hpp"

namespace bvllm {

SynthInstance synth_generate(const SynthSpec& spec) {
  if (spec.frames == 0 || spec.tokens == 0 || spec.dim == 0 || spec.text_tokens == 0) {
    throw ConfigError("synthetic video needs frames, tokens, dim and text tokens >= 1");
  }
  if (spec.noise < 0.0 || spec.body_spread < 0.0) throw ConfigError("noise must be non-negative");
  std::vector<std::size_t> planted = spec.planted;
  std::sort(planted.begin(), planted.end());
  planted.erase(std::unique(planted.begin(), planted.end()), planted.end());
  for (std::size_t p : planted) {
    if (p >= spec.frames) {
      throw ConfigError("planted frame " + std::to_string(p) + " is outside the " +
                        std::to_string(spec.frames) + "-frame video");
    }
  }

  const std::size_t L = spec.frames, M = spec.tokens, d = spec.dim;
  Rng rng = make_rng(spec.seed, 7);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](Tensor& t) {
    for (double& v : t.data()) v = normal(rng);
  };

  SynthInstance inst;
  inst.planted = planted;
  inst.relevant_centroid = Tensor::zeros(1, d);
  inst.distractor_centroid = Tensor::zeros(1, d);
  draw(inst.relevant_centroid);
  draw(inst.distractor_centroid);

  std::vector<bool> is_planted(L, false);
  for (std::size_t p : planted) is_planted[p] = true;

  inst.video.cls = Tensor::zeros(L, d);
  inst.video.body = Tensor(Shape{L, M, d});
  for (std::size_t l = 0; l < L; ++l) {
    const Tensor& centroid = is_planted[l] ? inst.relevant_centroid : inst.distractor_centroid;
    auto cls = inst.video.cls.row(l);
    for (std::size_t j = 0; j < d; ++j) cls[j] = centroid.data()[j] + spec.noise * normal(rng);
    for (std::size_t m = 0; m < M; ++m) {
      double* tok = inst.video.body.data().data() + (l * M + m) * d;
      for (std::size_t j = 0; j < d; ++j) tok[j] = cls[j] + spec.body_spread * normal(rng);
    }
  }

  inst.text.tokens = Tensor::zeros(spec.text_tokens, d);
  for (std::size_t n = 0; n < spec.text_tokens; ++n)
    for (std::size_t j = 0; j < d; ++j)
      inst.text.tokens(n, j) = inst.relevant_centroid.data()[j] + spec.noise * normal(rng);
  return inst;
}

std::vector<std::size_t> random_planted(std::size_t frames, std::size_t count, std::uint64_t seed) {
  if (count > frames) throw ConfigError("cannot plant more frames than the video has");
  std::vector<std::size_t> idx(frames);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(seed, 11);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace bvllm
