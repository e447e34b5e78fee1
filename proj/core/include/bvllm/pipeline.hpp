#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bvllm/config.hpp"
#include "bvllm/graph.hpp"
#include "bvllm/merger.hpp"
#include "bvllm/model.hpp"
#include "bvllm/selector.hpp"

namespace bvllm {

// Visual token counts (excluding [CLS]) after each stage.
struct StageCounts {
  std::size_t input = 0;     // L * M
  std::size_t selected = 0;  // L* * M
  std::size_t merged = 0;    // G * M
  std::size_t sampled = 0;   // G * R
  std::size_t final = 0;     // after the budget, <= theta

  friend bool operator==(const StageCounts&, const StageCounts&) = default;
};

struct StageTimings {
  double select_ms = 0;
  double merge_ms = 0;
  double sample_ms = 0;
  double budget_ms = 0;
  double project_ms = 0;
};

struct PipelineTrace {
  std::size_t frames = 0;            // L
  std::size_t tokens_per_frame = 0;  // M
  std::size_t perspectives = 0;      // L*
  std::size_t spatial_tokens = 0;    // R
  std::size_t theta = 0;
  std::size_t text_tokens = 0;
  SelectionMode mode = SelectionMode::soft;
  std::vector<std::size_t> selected_frames;  // per-perspective argmax, 0-based
  MergeGroups duplicate_groups;
  std::size_t halving_rounds = 0;
  std::vector<std::size_t> final_tokens_per_frame;
  StageCounts counts;
  std::size_t sequence_rows = 0;
  StageTimings timings;

  std::size_t final_token_count() const { return counts.final; }

  // Wall-clock timings are left out unless asked for, so that repeated runs
  // serialize to identical bytes.
  std::string to_json(bool include_timings = false) const;
  static PipelineTrace from_json(std::string_view text);
};

// Discrete choices taken during a run. Feeding them back through
// `run_graph` replays the same selections, groups and merges, which is how
// gradient checks hold decisions fixed.
struct Decisions {
  std::vector<std::size_t> selected;
  MergeGroups groups;
  BudgetPlan budget;
};

struct GraphRun {
  Var sequence;   // (final visual rows + N) x d_llm
  Var selection;  // L* x L
  Var merged;     // G x ((M + 1) * d)
  std::vector<Var> sampled;
  std::vector<Var> final_frames;
  PipelineTrace trace;
  Decisions decisions;
};

GraphRun run_graph(Graph& graph, const VideoTokens& video, const TextContext& text,
                   const ModelParams& params, const PipelineConfig& cfg,
                   const Decisions* frozen = nullptr);

struct PipelineOutput {
  Tensor sequence;
  PipelineTrace trace;
};

// select -> merge duplicates -> sample per frame -> enforce budget ->
// project -> append text.
PipelineOutput run(const VideoTokens& video, const TextContext& text, const ModelParams& params,
                   const PipelineConfig& cfg);

}  // namespace bvllm
