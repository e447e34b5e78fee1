#include "bvllm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "bvllm/merger.hpp"
#include "bvllm/model.hpp"
#include "bvllm/ops.hpp"
#include "bvllm/pipeline.hpp"
#include "bvllm/sampler.hpp"
#include "bvllm/selector.hpp"
#include "bvllm/synth.hpp"

namespace bvllm {

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> normal(0.0, stddev);
  Tensor t = Tensor::zeros(rows, cols);
  for (double& v : t.data()) v = normal(rng);
  return t;
}

// Fixed random readout so the scalar loss is O(1) regardless of shape.
Var readout(Var x, std::uint64_t seed) {
  Rng rng = make_rng(seed, 99);
  const Tensor w = random_matrix(x.rows(), x.cols(), rng,
                                 1.0 / std::sqrt(static_cast<double>(x.value().size())));
  return ops::weighted_sum(x, w);
}

PipelineConfig desk_config(std::uint64_t seed) {
  PipelineConfig cfg;
  cfg.frames_to_select = 3;
  cfg.tokens_per_frame = 2;
  cfg.dim = 16;
  cfg.llm_dim = 24;
  cfg.theta = 4;
  cfg.mode = SelectionMode::soft;
  cfg.seed = seed;
  return cfg;
}

SynthInstance desk_instance(std::uint64_t seed) {
  SynthSpec spec;
  spec.seed = seed;
  spec.frames = 6;
  spec.tokens = 8;
  spec.dim = 16;
  spec.planted = {1, 4};
  spec.noise = 0.3;
  spec.text_tokens = 3;
  return synth_generate(spec);
}

}  // namespace

double gradient_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

double GradCheckResult::max_rel_error() const {
  double m = 0;
  for (const auto& g : groups) m = std::max(m, g.max_rel_error);
  return m;
}

GradCheckResult finite_difference_check(const std::string& module, const LossBuilder& loss,
                                        const std::vector<std::pair<std::string, Tensor*>>& tensors,
                                        double step) {
  std::vector<Tensor> analytic;
  {
    Graph g;
    const Var l = loss(g);
    g.backward(l);
    for (const auto& [name, t] : tensors) analytic.push_back(g.grad_of(*t));
  }
  auto evaluate = [&] {
    Graph g;
    return loss(g).value().data()[0];
  };

  GradCheckResult result{module, {}};
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    auto& [name, tensor] = tensors[k];
    GradGroupResult group{name, tensor->size(), 0, 0};
    auto data = tensor->data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double original = data[i];
      data[i] = original + step;
      const double up = evaluate();
      data[i] = original - step;
      const double down = evaluate();
      data[i] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k].data()[i];
      group.max_abs_error = std::max(group.max_abs_error, std::abs(a - numeric));
      group.max_rel_error = std::max(group.max_rel_error, gradient_relative_error(a, numeric));
    }
    result.groups.push_back(group);
  }
  return result;
}

GradCheckResult check_selector(std::uint64_t seed) {
  const PipelineConfig cfg = desk_config(seed);
  ModelParams params = ModelParams::init(cfg, seed);
  const SynthInstance inst = desk_instance(seed);
  const Tensor stacked = inst.video.stacked();
  Rng rng = make_rng(seed, 5);
  const Tensor noise = sample_gumbel(cfg.frames_to_select, inst.video.frames(), rng);

  std::vector<std::pair<std::string, Tensor*>> tensors;
  params.selector.visit("selector.", [&](const std::string& n, Tensor& t) { tensors.emplace_back(n, &t); });
  auto loss = [&](Graph& g) {
    const Var cls = g.constant(inst.video.cls);
    const Var q = generate_queries(params.selector.queries, g.constant(inst.text.tokens), cls,
                                   params.selector.net);
    const Var s = gumbel_softmax(selection_logits(q, cls), cfg.tau, cfg.mode, noise);
    return readout(select_frames(s, g.constant(stacked)), seed);
  };
  return finite_difference_check("selector", loss, tensors);
}

GradCheckResult check_sampler(std::uint64_t seed) {
  const PipelineConfig cfg = desk_config(seed);
  ModelParams params = ModelParams::init(cfg, seed);
  const SynthInstance inst = desk_instance(seed);
  const Tensor frame = inst.video.body.reshaped({6 * 8, 16}).rows_slice(8, 16);

  std::vector<std::pair<std::string, Tensor*>> tensors;
  params.sampler.visit("sampler.", [&](const std::string& n, Tensor& t) { tensors.emplace_back(n, &t); });
  tensors.emplace_back("projector.visual.weight", &params.visual.weight);
  tensors.emplace_back("projector.visual.bias", &params.visual.bias);
  auto loss = [&](Graph& g) {
    const Var sampled = spatial_sample(g.constant(frame), g.constant(inst.text.tokens), params.sampler);
    return readout(project(sampled, params.visual), seed);
  };
  return finite_difference_check("sampler", loss, tensors);
}

GradCheckResult check_merger(std::uint64_t seed) {
  Rng rng = make_rng(seed, 6);
  Tensor selected = random_matrix(4, 3 * 4, rng);
  Tensor tokens = random_matrix(4, 5, rng);
  const MergeGroups groups{{{0, 2}, {1}, {3}}};
  const HalvingPlan plan = plan_bipartite_halve(tokens);

  auto loss = [&](Graph& g) {
    const Var merged = temporal_merge(g.param(selected), groups);
    const Var halved = bipartite_halve(g.param(tokens), plan);
    return ops::add(readout(merged, seed), readout(halved, seed + 1));
  };
  return finite_difference_check("merger", loss,
                                 {{"merger.temporal_input", &selected}, {"merger.halving_input", &tokens}});
}

GradCheckResult check_pipeline(std::uint64_t seed) {
  const PipelineConfig cfg = desk_config(seed);
  ModelParams params = ModelParams::init(cfg, seed);
  const SynthInstance inst = desk_instance(seed);

  Decisions frozen;
  {
    Graph g;
    frozen = run_graph(g, inst.video, inst.text, params, cfg).decisions;
  }
  auto loss = [&](Graph& g) {
    const GraphRun r = run_graph(g, inst.video, inst.text, params, cfg, &frozen);
    return readout(r.sequence, seed);
  };
  return finite_difference_check("pipeline", loss, params.named_tensors());
}

}  // namespace bvllm
