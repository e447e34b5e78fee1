#include "bvllm/pipeline.hpp"

#include <chrono>

#include <nlohmann/json.hpp>

#include "bvllm/error.hpp"
#include "bvllm/ops.hpp"
#include "bvllm/sampler.hpp"

namespace bvllm {

using nlohmann::json;

namespace {

constexpr std::uint64_t kGumbelStream = 1;

class StopWatch {
 public:
  double lap_ms() {
    const auto now = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
    return ms;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

}  // namespace

std::string PipelineTrace::to_json(bool include_timings) const {
  json j;
  j["frames"] = frames;
  j["tokens_per_frame"] = tokens_per_frame;
  j["perspectives"] = perspectives;
  j["spatial_tokens"] = spatial_tokens;
  j["theta"] = theta;
  j["text_tokens"] = text_tokens;
  j["mode"] = std::string(to_string(mode));
  j["selected_frames"] = selected_frames;
  j["duplicate_groups"] = duplicate_groups.groups;
  j["merge_order"] = "representative";
  j["halving_rounds"] = halving_rounds;
  j["final_tokens_per_frame"] = final_tokens_per_frame;
  j["final_token_count"] = counts.final;
  j["sequence_rows"] = sequence_rows;
  j["stage_counts"] = {{"input", counts.input},     {"selected", counts.selected},
                       {"merged", counts.merged},   {"sampled", counts.sampled},
                       {"final", counts.final}};
  if (include_timings) {
    j["timings_ms"] = {{"select", timings.select_ms}, {"merge", timings.merge_ms},
                       {"sample", timings.sample_ms}, {"budget", timings.budget_ms},
                       {"project", timings.project_ms}};
  }
  return j.dump(2) + "\n";
}

PipelineTrace PipelineTrace::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("trace is not valid JSON: ") + e.what());
  }
  PipelineTrace t;
  try {
    t.frames = j.at("frames").get<std::size_t>();
    t.tokens_per_frame = j.at("tokens_per_frame").get<std::size_t>();
    t.perspectives = j.at("perspectives").get<std::size_t>();
    t.spatial_tokens = j.at("spatial_tokens").get<std::size_t>();
    t.theta = j.at("theta").get<std::size_t>();
    t.text_tokens = j.value("text_tokens", std::size_t{0});
    t.mode = parse_selection_mode(j.value("mode", std::string("soft")));
    t.selected_frames = j.at("selected_frames").get<std::vector<std::size_t>>();
    t.duplicate_groups.groups = j.at("duplicate_groups").get<std::vector<std::vector<std::size_t>>>();
    t.halving_rounds = j.at("halving_rounds").get<std::size_t>();
    t.final_tokens_per_frame = j.value("final_tokens_per_frame", std::vector<std::size_t>{});
    const json& c = j.at("stage_counts");
    t.counts = {c.at("input").get<std::size_t>(), c.at("selected").get<std::size_t>(),
                c.at("merged").get<std::size_t>(), c.at("sampled").get<std::size_t>(),
                c.at("final").get<std::size_t>()};
    if (j.at("final_token_count").get<std::size_t>() != t.counts.final) {
      throw FormatError("trace final_token_count disagrees with stage_counts.final");
    }
    t.sequence_rows = j.value("sequence_rows", std::size_t{0});
  } catch (const json::exception& e) {
    throw FormatError(std::string("trace is missing a field: ") + e.what());
  }
  return t;
}

GraphRun run_graph(Graph& graph, const VideoTokens& video, const TextContext& text,
                   const ModelParams& params, const PipelineConfig& cfg, const Decisions* frozen) {
  cfg.validate();
  video.validate();
  text.validate();
  if (video.dim() != cfg.dim || text.dim() != cfg.dim) {
    throw ConfigError("input width (video " + std::to_string(video.dim()) + ", text " +
                      std::to_string(text.dim()) + ") does not match config dim " +
                      std::to_string(cfg.dim));
  }
  if (params.selector.queries.count() != cfg.frames_to_select ||
      params.sampler.queries.count() != cfg.tokens_per_frame) {
    throw ConfigError("parameter banks do not match frames_to_select / tokens_per_frame");
  }

  const std::size_t L = video.frames(), M = video.tokens_per_frame(), d = video.dim();
  const std::size_t Lstar = cfg.frames_to_select;
  GraphRun out;
  PipelineTrace& trace = out.trace;
  trace.frames = L;
  trace.tokens_per_frame = M;
  trace.perspectives = Lstar;
  trace.spatial_tokens = cfg.tokens_per_frame;
  trace.theta = cfg.theta;
  trace.text_tokens = text.length();
  trace.mode = cfg.mode;
  StopWatch watch;

  // Temporal selection.
  const Tensor cls_in = cfg.temporal_positions ? add_temporal_positions(video.cls) : video.cls;
  const Var cls = graph.constant(cls_in);
  const Var text_var = graph.constant(text.tokens);
  const Var queries = generate_queries(params.selector.queries, text_var, cls, params.selector.net);
  const Var logits = selection_logits(queries, cls, cfg.scale_logits);
  Rng rng = make_rng(cfg.seed, kGumbelStream);
  const Tensor noise = sample_gumbel(Lstar, L, rng);
  const std::vector<std::size_t> forced =
      frozen && cfg.mode == SelectionMode::hard ? frozen->selected : std::vector<std::size_t>{};
  out.selection = gumbel_softmax(logits, cfg.tau, cfg.mode, noise, forced);
  const SelectionMatrix selection{out.selection.value(), cfg.tau, cfg.mode};
  out.decisions.selected = selection.argmax();
  trace.selected_frames = out.decisions.selected;
  const Var stacked = graph.constant(video.stacked());
  const Var v_star = select_frames(out.selection, stacked);
  trace.timings.select_ms = watch.lap_ms();

  // Temporal merge.
  out.decisions.groups = frozen ? frozen->groups : find_duplicate_groups(selection.weights, cfg.gamma);
  trace.duplicate_groups = out.decisions.groups;
  out.merged = temporal_merge(v_star, out.decisions.groups);
  const std::size_t G = out.decisions.groups.size();
  trace.timings.merge_ms = watch.lap_ms();

  // Spatial sampling on the body rows of every merged frame.
  const Var frame_rows = ops::reshape(out.merged, G * (M + 1), d);
  for (std::size_t g = 0; g < G; ++g) {
    const Var body = ops::slice_rows(frame_rows, g * (M + 1) + 1, (g + 1) * (M + 1));
    out.sampled.push_back(spatial_sample(body, text_var, params.sampler));
  }
  trace.timings.sample_ms = watch.lap_ms();

  out.final_frames = enforce_budget(out.sampled, cfg.theta, frozen ? &frozen->budget : nullptr,
                                    &out.decisions.budget);
  trace.halving_rounds = out.decisions.budget.round_count();
  trace.timings.budget_ms = watch.lap_ms();

  std::vector<Var> projected;
  projected.reserve(G);
  std::size_t final_count = 0;
  for (const Var& f : out.final_frames) {
    trace.final_tokens_per_frame.push_back(f.rows());
    final_count += f.rows();
    projected.push_back(project(f, params.visual));
  }
  out.sequence = assemble_sequence(projected, text_var, cfg.dim != cfg.llm_dim ? &params.text : nullptr);
  trace.timings.project_ms = watch.lap_ms();

  trace.counts = {L * M, Lstar * M, G * M, G * cfg.tokens_per_frame, final_count};
  trace.sequence_rows = out.sequence.rows();
  return out;
}

PipelineOutput run(const VideoTokens& video, const TextContext& text, const ModelParams& params,
                   const PipelineConfig& cfg) {
  Graph graph;
  GraphRun r = run_graph(graph, video, text, params, cfg);
  return PipelineOutput{r.sequence.value(), std::move(r.trace)};
}

}  // namespace bvllm
