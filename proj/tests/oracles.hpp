#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "bvllm/merger.hpp"
#include "bvllm/tensor.hpp"

// Brute-force reference implementations used by the merger tests and the
// acceptance runner.
namespace bvllm::testing {

inline double cosine(std::span<const double> x, std::span<const double> y) {
  double xy = 0, xx = 0, yy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xy += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  return xy / (std::max(std::sqrt(xx), 1e-8) * std::max(std::sqrt(yy), 1e-8));
}

// Pairwise-threshold grouping written straight from the definition.
inline MergeGroups grouping_oracle(const Tensor& rows, double gamma) {
  const std::size_t n = rows.rows();
  std::vector<int> owner(n, -1);
  MergeGroups out;
  for (std::size_t a = 0; a < n; ++a) {
    if (owner[a] >= 0) continue;
    owner[a] = static_cast<int>(out.groups.size());
    std::vector<std::size_t> group{a};
    for (std::size_t b = a + 1; b < n; ++b) {
      if (owner[b] < 0 && cosine(rows.row(a), rows.row(b)) >= gamma) {
        owner[b] = owner[a];
        group.push_back(b);
      }
    }
    out.groups.push_back(group);
  }
  return out;
}

// Scores every A -> B assignment and every choice of floor(K/2) merged edges.
inline HalvingPlan halving_oracle(const Tensor& t) {
  const std::size_t k = t.rows();
  std::vector<std::size_t> A, B;
  for (std::size_t i = 0; i < k; ++i) (i % 2 == 0 ? A : B).push_back(i);
  std::vector<std::size_t> best_map;
  double best_score = -1e300;
  std::vector<std::size_t> map(A.size(), 0);
  while (true) {
    double s = 0;
    for (std::size_t i = 0; i < A.size(); ++i) s += cosine(t.row(A[i]), t.row(B[map[i]]));
    if (s > best_score) {
      best_score = s;
      best_map = map;
    }
    std::size_t pos = 0;
    while (pos < map.size() && ++map[pos] == B.size()) map[pos++] = 0;
    if (pos == map.size()) break;
  }
  const std::size_t r = k / 2;
  std::vector<bool> chosen;
  double best_subset = -1e300;
  for (std::uint32_t mask = 0; mask < (1u << A.size()); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != r) continue;
    double s = 0;
    for (std::size_t i = 0; i < A.size(); ++i)
      if (mask & (1u << i)) s += cosine(t.row(A[i]), t.row(B[best_map[i]]));
    if (s > best_subset) {
      best_subset = s;
      chosen.assign(A.size(), false);
      for (std::size_t i = 0; i < A.size(); ++i) chosen[i] = (mask & (1u << i)) != 0;
    }
  }
  HalvingPlan plan;
  std::vector<std::vector<std::size_t>> b_sources;
  for (std::size_t b : B) b_sources.push_back({b});
  for (std::size_t i = 0; i < A.size(); ++i) {
    if (chosen[i]) {
      b_sources[best_map[i]].push_back(A[i]);
    } else {
      plan.sources.push_back({A[i]});
    }
  }
  for (auto& s : b_sources) {
    std::sort(s.begin(), s.end());
    plan.sources.push_back(s);
  }
  return plan;
}

}  // namespace bvllm::testing
