#include "bvllm/merger.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bvllm/error.hpp"
#include "bvllm/ops.hpp"

namespace bvllm {

bool MergeGroups::is_partition_of(std::size_t n) const {
  std::vector<int> seen(n, 0);
  for (const auto& g : groups) {
    if (g.empty()) return false;
    for (std::size_t i : g) {
      if (i >= n || seen[i]++) return false;
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; });
}

void BudgetConfig::validate() const {
  if (theta < 1) throw ConfigError("token budget theta must be at least 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw ConfigError("duplicate threshold gamma must lie in (0, 1], got " + std::to_string(gamma));
  }
}

MergeGroups find_duplicate_groups(const Tensor& selection_rows, double gamma) {
  const std::size_t n = selection_rows.rows();
  const Tensor cos = kernels::cosine_matrix(selection_rows, selection_rows);
  std::vector<bool> assigned(n, false);
  MergeGroups out;
  for (std::size_t alpha = 0; alpha < n; ++alpha) {
    if (assigned[alpha]) continue;
    std::vector<std::size_t> group{alpha};
    assigned[alpha] = true;
    for (std::size_t beta = alpha + 1; beta < n; ++beta) {
      if (!assigned[beta] && cos(alpha, beta) >= gamma) {
        group.push_back(beta);
        assigned[beta] = true;
      }
    }
    out.groups.push_back(std::move(group));
  }
  return out;
}

Var temporal_merge(Var selected_frames, const MergeGroups& groups) {
  if (!groups.is_partition_of(selected_frames.rows())) {
    throw DimensionError("merge groups do not partition the " +
                         std::to_string(selected_frames.rows()) + " selected frames");
  }
  return ops::group_mean_rows(selected_frames, groups.groups);
}

Tensor temporal_merge(const Tensor& selected, const MergeGroups& groups) {
  Graph g;
  const Var merged = temporal_merge(g.constant(selected.reshaped({selected.rows(), selected.cols()})), groups);
  Shape shape = selected.shape();
  shape[0] = groups.size();
  return merged.value().reshaped(shape);
}

HalvingPlan plan_bipartite_halve(const Tensor& tokens) {
  const std::size_t k = tokens.rows();
  HalvingPlan plan;
  if (k < 2) {
    for (std::size_t i = 0; i < k; ++i) plan.sources.push_back({i});
    return plan;
  }
  std::vector<std::size_t> a_idx, b_idx;
  for (std::size_t i = 0; i < k; ++i) (i % 2 == 0 ? a_idx : b_idx).push_back(i);

  Tensor a = Tensor::zeros(a_idx.size(), tokens.cols());
  Tensor b = Tensor::zeros(b_idx.size(), tokens.cols());
  for (std::size_t i = 0; i < a_idx.size(); ++i)
    std::copy(tokens.row(a_idx[i]).begin(), tokens.row(a_idx[i]).end(), a.row(i).begin());
  for (std::size_t j = 0; j < b_idx.size(); ++j)
    std::copy(tokens.row(b_idx[j]).begin(), tokens.row(b_idx[j]).end(), b.row(j).begin());
  const Tensor cos = kernels::cosine_matrix(a, b);

  struct Edge {
    std::size_t a;
    std::size_t b;
    double score;
  };
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < a_idx.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < b_idx.size(); ++j)
      if (cos(i, j) > cos(i, best)) best = j;
    edges.push_back({i, best, cos(i, best)});
  }
  std::stable_sort(edges.begin(), edges.end(),
                   [](const Edge& x, const Edge& y) { return x.score > y.score; });

  const std::size_t r = k / 2;
  std::vector<bool> merged(a_idx.size(), false);
  std::vector<std::vector<std::size_t>> b_sources(b_idx.size());
  for (std::size_t j = 0; j < b_idx.size(); ++j) b_sources[j].push_back(b_idx[j]);
  for (std::size_t e = 0; e < r; ++e) {
    merged[edges[e].a] = true;
    b_sources[edges[e].b].push_back(a_idx[edges[e].a]);
  }
  for (std::size_t i = 0; i < a_idx.size(); ++i)
    if (!merged[i]) plan.sources.push_back({a_idx[i]});
  for (auto& s : b_sources) {
    std::sort(s.begin(), s.end());
    plan.sources.push_back(std::move(s));
  }
  return plan;
}

Var bipartite_halve(Var tokens, const HalvingPlan& plan) {
  return ops::group_mean_rows(tokens, plan.sources);
}

Tensor bipartite_halve(const Tensor& tokens) {
  if (tokens.rows() < 2) return tokens;
  Graph g;
  return bipartite_halve(g.constant(tokens), plan_bipartite_halve(tokens)).value();
}

std::vector<Var> enforce_budget(const std::vector<Var>& frames, std::size_t theta,
                                const BudgetPlan* frozen, BudgetPlan* plan_out) {
  if (frames.size() > theta) throw BudgetInfeasibleError(frames.size(), theta);
  auto total = [](const std::vector<Var>& fs) {
    std::size_t t = 0;
    for (const Var& f : fs) t += f.rows();
    return t;
  };
  auto all_single = [](const std::vector<Var>& fs) {
    return std::all_of(fs.begin(), fs.end(), [](const Var& f) { return f.rows() <= 1; });
  };

  std::vector<Var> current = frames;
  BudgetPlan plan;
  while (total(current) > theta && !all_single(current)) {
    const std::size_t round = plan.rounds.size();
    if (frozen && round >= frozen->rounds.size()) {
      throw Error("frozen budget plan has fewer rounds than required");
    }
    std::vector<HalvingPlan> round_plans;
    for (std::size_t f = 0; f < current.size(); ++f) {
      HalvingPlan p = frozen ? frozen->rounds[round].at(f) : plan_bipartite_halve(current[f].value());
      if (current[f].rows() >= 2) current[f] = bipartite_halve(current[f], p);
      round_plans.push_back(std::move(p));
    }
    plan.rounds.push_back(std::move(round_plans));
  }
  if (plan_out) *plan_out = std::move(plan);
  return current;
}

BudgetResult enforce_budget(const std::vector<Tensor>& frames, std::size_t theta) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(frames.size());
  for (const Tensor& f : frames) vars.push_back(g.constant(f));
  BudgetPlan plan;
  const auto out = enforce_budget(vars, theta, nullptr, &plan);
  BudgetResult result;
  result.rounds = plan.round_count();
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Untouched frames are returned bit-equal to the input.
    result.frames.push_back(out[i].id() == vars[i].id() ? frames[i] : out[i].value());
  }
  return result;
}

}  // namespace bvllm
