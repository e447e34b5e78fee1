#pragma once

#include <cstddef>
#include <vector>

#include "bvllm/graph.hpp"
#include "bvllm/tensor.hpp"

namespace bvllm {

// Ordered partition of selection rows into duplicate groups. Indices are
// 0-based; groups are ordered by their smallest member and each group lists
// its members in ascending order.
struct MergeGroups {
  std::vector<std::vector<std::size_t>> groups;

  std::size_t size() const { return groups.size(); }
  // True when the groups are disjoint and cover exactly {0, ..., n - 1}.
  bool is_partition_of(std::size_t n) const;

  friend bool operator==(const MergeGroups&, const MergeGroups&) = default;
};

struct BudgetConfig {
  std::size_t theta = 2048;
  double gamma = 0.9;

  void validate() const;
};

inline constexpr double kDefaultGamma = 0.9;

// Repeatedly takes the smallest unassigned row alpha and groups it with every
// unassigned row beta whose cosine similarity to alpha is >= gamma.
MergeGroups find_duplicate_groups(const Tensor& selection_rows, double gamma);

// Each output row is the plain mean of the grouped input rows, in group order.
Var temporal_merge(Var selected_frames, const MergeGroups& groups);
// selected: L* x (M + 1) x d (or any L* x n matrix). Returns G x ... in kind.
Tensor temporal_merge(const Tensor& selected, const MergeGroups& groups);

// Source rows of every output token after one bipartite halving step.
struct HalvingPlan {
  std::vector<std::vector<std::size_t>> sources;

  friend bool operator==(const HalvingPlan&, const HalvingPlan&) = default;
};

// Alternating partition A = {0, 2, 4, ...}, B = {1, 3, 5, ...}. Every a in A
// is matched to its most cosine-similar b (lowest b on ties); the floor(K/2)
// best edges (lowest a on ties) merge, each b becoming the mean of itself and
// every a merged into it. Output: unmerged A tokens, then B tokens, each in
// original order. K < 2 yields the identity plan.
HalvingPlan plan_bipartite_halve(const Tensor& tokens);
Var bipartite_halve(Var tokens, const HalvingPlan& plan);
Tensor bipartite_halve(const Tensor& tokens);

// Halving plans applied by enforce_budget: rounds[r][f] is the plan for
// frame f in round r (identity plans for frames that were left alone).
struct BudgetPlan {
  std::vector<std::vector<HalvingPlan>> rounds;

  std::size_t round_count() const { return rounds.size(); }
};

struct BudgetResult {
  std::vector<Tensor> frames;
  std::size_t rounds = 0;
};

// While the total token count exceeds theta, halves every frame holding at
// least two tokens. Throws BudgetInfeasibleError when there are more frames
// than theta. When `frozen` is given its plans are replayed instead of being
// recomputed; otherwise the plans used are written to `plan_out`.
std::vector<Var> enforce_budget(const std::vector<Var>& frames, std::size_t theta,
                                const BudgetPlan* frozen = nullptr, BudgetPlan* plan_out = nullptr);
BudgetResult enforce_budget(const std::vector<Tensor>& frames, std::size_t theta);

}  // namespace bvllm
