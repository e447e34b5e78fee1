#include "bvllm/train.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "bvllm/error.hpp"
#include "bvllm/ops.hpp"

namespace bvllm {

namespace {

constexpr std::uint64_t kTrainNoiseStream = 21;
constexpr std::uint64_t kEvalStream = 1u << 30;

Tensor planted_targets(std::size_t rows, std::size_t frames, const std::vector<std::size_t>& planted) {
  Tensor t = Tensor::zeros(rows, frames);
  const double w = 1.0 / static_cast<double>(planted.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t p : planted) t(i, p) = w;
  return t;
}

Var perturbed_logits(const SelectorParams& params, const PipelineConfig& cfg,
                     const SynthInstance& instance, const Tensor& noise, Graph& graph) {
  const Tensor cls_in = cfg.temporal_positions ? add_temporal_positions(instance.video.cls)
                                               : instance.video.cls;
  const Var cls = graph.constant(cls_in);
  const Var text = graph.constant(instance.text.tokens);
  const Var q = generate_queries(params.queries, text, cls, params.net);
  const Var logits = selection_logits(q, cls, cfg.scale_logits);
  if (cfg.mode == SelectionMode::deterministic) return logits;
  return ops::add_constant(logits, noise);
}

}  // namespace

std::string TrainReport::to_json() const {
  nlohmann::json j;
  j["final_loss"] = final_loss;
  j["final_accuracy"] = final_accuracy;
  auto& curve_json = j["curve"] = nlohmann::json::array();
  for (const auto& p : curve)
    curve_json.push_back({{"step", p.step}, {"loss", p.loss}, {"accuracy", p.accuracy}});
  return j.dump(2) + "\n";
}

SynthInstance toy_instance(const ToyTask& task, std::uint64_t seed, std::size_t index) {
  const std::uint64_t s = seed * 0x9E3779B97F4A7C15ull + index + 1;
  SynthSpec spec;
  spec.seed = s;
  spec.frames = task.frames;
  spec.tokens = task.tokens;
  spec.dim = task.dim;
  spec.planted = random_planted(task.frames, task.planted, s);
  spec.noise = task.noise;
  spec.text_tokens = task.text_tokens;
  return synth_generate(spec);
}

Var selection_loss(const SelectorParams& params, const PipelineConfig& cfg,
                   const SynthInstance& instance, const Tensor& noise, Graph& graph) {
  if (instance.planted.empty()) throw ConfigError("selection loss needs at least one planted frame");
  const Var z = perturbed_logits(params, cfg, instance, noise, graph);
  const Var logp = ops::log_softmax_rows(ops::scale(z, 1.0 / cfg.tau));
  const Tensor target = planted_targets(z.rows(), z.cols(), instance.planted);
  return ops::scale(ops::weighted_sum(logp, target), -1.0 / static_cast<double>(z.rows()));
}

SelectionEval evaluate_selection(const SelectorParams& params, const PipelineConfig& cfg,
                                 const std::vector<SynthInstance>& instances,
                                 std::uint64_t noise_seed) {
  SelectionEval e;
  if (instances.empty()) return e;
  Rng rng = make_rng(noise_seed, kEvalStream);
  std::size_t hits = 0, total = 0;
  for (const SynthInstance& inst : instances) {
    const Tensor noise = sample_gumbel(cfg.frames_to_select, inst.video.frames(), rng);
    Graph g;
    const Var loss = selection_loss(params, cfg, inst, noise, g);
    e.loss += loss.value().data()[0];
    const Tensor z = perturbed_logits(params, cfg, inst, noise, g).value();
    for (std::size_t i = 0; i < z.rows(); ++i) {
      const auto r = z.row(i);
      const std::size_t pick = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
      hits += std::binary_search(inst.planted.begin(), inst.planted.end(), pick) ? 1 : 0;
      ++total;
    }
  }
  e.loss /= static_cast<double>(instances.size());
  e.accuracy = static_cast<double>(hits) / static_cast<double>(total);
  return e;
}

Adam::Adam(std::vector<Tensor*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (Tensor* p : params_) {
    m_.emplace_back(p->shape());
    v_.emplace_back(p->shape());
  }
}

void Adam::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size()) throw Error("Adam::step got the wrong number of gradients");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto p = params_[i]->data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    const auto g = grads[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      p[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

TrainReport train_toy(SelectorParams& params, const PipelineConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  if (options.task.dim != cfg.dim) throw ConfigError("toy task dim must match config dim");
  if (params.queries.count() != cfg.frames_to_select) {
    throw ConfigError("query bank size does not match frames_to_select");
  }
  if (options.batch == 0 || options.eval_every == 0) throw ConfigError("batch and eval_every must be >= 1");
  if (!std::isfinite(options.lr) || options.lr < 0) throw ConfigError("learning rate must be finite and >= 0");

  std::vector<SynthInstance> eval_set;
  for (std::size_t i = 0; i < options.eval_size; ++i)
    eval_set.push_back(toy_instance(options.task, options.seed, kEvalStream + i));

  std::vector<Tensor*> tensors;
  params.visit("", [&](const std::string&, Tensor& t) { tensors.push_back(&t); });
  Adam adam(tensors, options.lr);
  Rng noise_rng = make_rng(options.seed, kTrainNoiseStream);

  TrainReport report;
  auto record = [&](std::size_t step) {
    const SelectionEval e = evaluate_selection(params, cfg, eval_set, options.seed);
    if (!std::isfinite(e.loss)) throw TrainingError(step, "evaluation loss is not finite");
    report.curve.push_back({step, e.loss, e.accuracy});
  };
  record(0);

  for (std::size_t step = 1; step <= options.steps; ++step) {
    Graph g;
    std::vector<Var> losses;
    for (std::size_t b = 0; b < options.batch; ++b) {
      const SynthInstance inst = toy_instance(options.task, options.seed, (step - 1) * options.batch + b);
      const Tensor noise = sample_gumbel(cfg.frames_to_select, inst.video.frames(), noise_rng);
      losses.push_back(selection_loss(params, cfg, inst, noise, g));
    }
    const Var total = ops::scale(ops::sum(ops::concat_rows(losses)), 1.0 / static_cast<double>(options.batch));
    const double value = total.value().data()[0];
    if (!std::isfinite(value)) throw TrainingError(step, "training loss is not finite");
    g.backward(total);
    std::vector<Tensor> grads;
    grads.reserve(tensors.size());
    for (Tensor* t : tensors) grads.push_back(g.grad_of(*t));
    adam.step(grads);

    if (step % options.eval_every == 0 || step == options.steps) record(step);
  }
  report.final_loss = report.curve.back().loss;
  report.final_accuracy = report.curve.back().accuracy;
  return report;
}

}  // namespace bvllm
