#include "bvllm/sweep.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bvllm/error.hpp"
#include "bvllm/model.hpp"
#include "bvllm/pipeline.hpp"
#include "bvllm/synth.hpp"
#include "bvllm/train.hpp"

namespace bvllm {

namespace {

constexpr std::uint64_t kSweepEvalStream = 3u << 28;

std::vector<std::size_t> parse_list(std::string_view text, std::string_view spec) {
  std::vector<std::size_t> out;
  while (true) {
    const std::size_t comma = text.find(',');
    const std::string_view item = text.substr(0, comma);
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
    if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size() || value == 0) {
      throw ConfigError("bad grid spec '" + std::string(spec) + "': expected positive integers like 4,8x16,32");
    }
    if (std::find(out.begin(), out.end(), value) == out.end()) out.push_back(value);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

SweepGrid SweepGrid::parse(std::string_view spec) {
  const std::size_t x = spec.find('x');
  if (x == std::string_view::npos || spec.find('x', x + 1) != std::string_view::npos) {
    throw ConfigError("bad grid spec '" + std::string(spec) + "': expected <L* list>x<R list>");
  }
  return SweepGrid{parse_list(spec.substr(0, x), spec), parse_list(spec.substr(x + 1), spec)};
}

double span_energy_fraction(const Tensor& rows, const Tensor& basis) {
  const std::size_t d = rows.cols();
  std::vector<std::vector<double>> q;
  for (std::size_t i = 0; i < basis.rows(); ++i) {
    const auto b = basis.row(i);
    std::vector<double> v(b.begin(), b.end());
    const double original = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    for (const auto& u : q) {
      const double c = std::inner_product(v.begin(), v.end(), u.begin(), 0.0);
      for (std::size_t j = 0; j < d; ++j) v[j] -= c * u[j];
    }
    const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (n <= 1e-10 * std::max(original, 1.0)) continue;
    for (double& x : v) x /= n;
    q.push_back(std::move(v));
  }
  double total = 0, captured = 0;
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    const auto r = rows.row(i);
    total += std::inner_product(r.begin(), r.end(), r.begin(), 0.0);
    for (const auto& u : q) {
      const double c = std::inner_product(r.begin(), r.end(), u.begin(), 0.0);
      captured += c * c;
    }
  }
  return total > 0 ? std::min(1.0, captured / total) : 1.0;
}

SweepReport sweep(const SweepOptions& options) {
  if (options.grid.size() == 0) throw ConfigError("sweep grid is empty");
  if (options.planted == 0 || options.planted > options.frames) {
    throw ConfigError("sweep needs between 1 and frames planted frames");
  }

  ToyTask task;
  task.frames = options.frames;
  task.dim = options.dim;
  task.planted = options.planted;

  std::vector<SynthInstance> eval_set;
  for (std::size_t i = 0; i < options.eval_size; ++i) {
    const std::uint64_t s = options.seed * 0x9E3779B97F4A7C15ull + kSweepEvalStream + i;
    SynthSpec spec;
    spec.seed = s;
    spec.frames = options.frames;
    spec.tokens = options.tokens;
    spec.dim = options.dim;
    spec.planted = random_planted(options.frames, options.planted, s);
    eval_set.push_back(synth_generate(spec));
  }

  SweepReport report;
  report.options = options;
  for (std::size_t lstar : options.grid.frames_to_select) {
    PipelineConfig cfg;
    cfg.frames_to_select = lstar;
    cfg.theta = std::max(options.theta, lstar);
    cfg.dim = options.dim;
    cfg.llm_dim = options.dim;
    cfg.seed = options.seed;

    SelectorParams selector = ModelParams::init(cfg, options.seed).selector;
    TrainOptions train;
    train.steps = options.train_steps;
    train.seed = options.seed;
    train.task = task;
    train.eval_every = std::max<std::size_t>(options.train_steps, 1);
    train.eval_size = 8;
    train_toy(selector, cfg, train);

    cfg.mode = SelectionMode::hard;
    for (std::size_t r : options.grid.tokens_per_frame) {
      cfg.tokens_per_frame = r;
      ModelParams params = ModelParams::init(cfg, options.seed);
      params.selector = selector;

      SweepRow row;
      row.frames_to_select = lstar;
      row.tokens_per_frame = r;
      row.tokens_pre_budget = lstar * r;
      row.tokens_budget_cap = std::min(lstar * r, cfg.theta);
      std::size_t hits = 0, picks = 0;
      double recall = 0, fidelity = 0, final_tokens = 0;
      for (std::size_t i = 0; i < eval_set.size(); ++i) {
        const SynthInstance& inst = eval_set[i];
        cfg.seed = options.seed + i;
        Graph g;
        const GraphRun run = run_graph(g, inst.video, inst.text, params, cfg);

        std::set<std::size_t> found;
        for (std::size_t f : run.decisions.selected) {
          const bool hit = std::binary_search(inst.planted.begin(), inst.planted.end(), f);
          hits += hit ? 1 : 0;
          if (hit) found.insert(f);
          ++picks;
        }
        recall += static_cast<double>(found.size()) /
                  static_cast<double>(std::min(inst.planted.size(), lstar));

        const std::size_t M = inst.video.tokens_per_frame(), d = inst.video.dim();
        const Tensor merged = run.merged.value();
        double frame_fidelity = 0;
        for (std::size_t k = 0; k < run.final_frames.size(); ++k) {
          const Tensor frame = merged.rows_slice(k, k + 1).reshaped({M + 1, d}).rows_slice(1, M + 1);
          frame_fidelity += span_energy_fraction(frame, run.final_frames[k].value());
        }
        fidelity += frame_fidelity / static_cast<double>(run.final_frames.size());
        final_tokens += static_cast<double>(run.trace.counts.final);
      }
      const double n = static_cast<double>(eval_set.size());
      row.frame_accuracy = static_cast<double>(hits) / static_cast<double>(picks);
      row.planted_recall = recall / n;
      row.spatial_fidelity = fidelity / n;
      row.accuracy = row.planted_recall * row.spatial_fidelity;
      row.mean_final_tokens = final_tokens / n;
      report.rows.push_back(row);
      cfg.seed = options.seed;
    }
  }

  for (std::size_t lstar : options.grid.frames_to_select) {
    std::vector<const SweepRow*> line;
    for (const SweepRow& row : report.rows)
      if (row.frames_to_select == lstar) line.push_back(&row);
    if (line.size() < 2) continue;
    bool monotone = true;
    for (std::size_t i = 1; i < line.size(); ++i)
      monotone = monotone && line[i]->accuracy + 1e-12 >= line[i - 1]->accuracy;
    report.observations.push_back(
        "L*=" + std::to_string(lstar) + ": accuracy " + (monotone ? "non-decreasing" : "not monotone") +
        " in R (R=" + std::to_string(line.front()->tokens_per_frame) + " -> " + fixed(line.front()->accuracy) +
        ", R=" + std::to_string(line.back()->tokens_per_frame) + " -> " + fixed(line.back()->accuracy) + ")");
  }
  return report;
}

std::string SweepReport::to_json() const {
  nlohmann::json j;
  j["theta"] = options.theta;
  j["train_steps"] = options.train_steps;
  j["eval_size"] = options.eval_size;
  j["seed"] = options.seed;
  j["task"] = {{"frames", options.frames}, {"tokens", options.tokens}, {"dim", options.dim},
               {"planted", options.planted}};
  auto& rows_json = j["rows"] = nlohmann::json::array();
  for (const SweepRow& r : rows) {
    rows_json.push_back({{"frames_to_select", r.frames_to_select},
                         {"tokens_per_frame", r.tokens_per_frame},
                         {"accuracy", r.accuracy},
                         {"frame_accuracy", r.frame_accuracy},
                         {"planted_recall", r.planted_recall},
                         {"spatial_fidelity", r.spatial_fidelity},
                         {"tokens_pre_budget", r.tokens_pre_budget},
                         {"tokens_budget_cap", r.tokens_budget_cap},
                         {"mean_final_tokens", r.mean_final_tokens}});
  }
  j["observations"] = observations;
  return j.dump(2) + "\n";
}

std::string SweepReport::to_table() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%4s %4s %9s %9s %8s %9s %8s %8s %9s\n", "L*", "R", "accuracy",
                "frame_acc", "recall", "fidelity", "pre", "cap", "final");
  out << line;
  for (const SweepRow& r : rows) {
    std::snprintf(line, sizeof line, "%4zu %4zu %9.4f %9.4f %8.4f %9.4f %8zu %8zu %9.2f\n",
                  r.frames_to_select, r.tokens_per_frame, r.accuracy, r.frame_accuracy,
                  r.planted_recall, r.spatial_fidelity, r.tokens_pre_budget, r.tokens_budget_cap,
                  r.mean_final_tokens);
    out << line;
  }
  for (const std::string& o : observations) out << o << "\n";
  return out.str();
}

}  // namespace bvllm
