#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "bvllm/graph.hpp"
#include "bvllm/tensor.hpp"

namespace bvllm {

inline constexpr double kGradCheckStep = 1e-5;
inline constexpr double kGradCheckTolerance = 1e-4;
// Denominator floor of the relative error. Central differences at h = 1e-5
// carry roughly 1e-10 of absolute roundoff, so gradients below this floor
// (attention key biases, for one, are exactly zero) are compared in absolute
// terms instead.
inline constexpr double kGradCheckFloor = 1e-5;

// |analytic - numeric| / max(|analytic|, |numeric|, kGradCheckFloor)
double gradient_relative_error(double analytic, double numeric);

struct GradGroupResult {
  std::string name;
  std::size_t size = 0;
  double max_rel_error = 0;
  double max_abs_error = 0;
};

struct GradCheckResult {
  std::string module;
  std::vector<GradGroupResult> groups;

  double max_rel_error() const;
  bool passed(double tolerance = kGradCheckTolerance) const { return max_rel_error() < tolerance; }
};

using LossBuilder = std::function<Var(Graph&)>;

// Compares reverse-mode gradients of `loss` against central differences for
// every element of every listed tensor. The builder must bind the tensors
// with Graph::param() and must hold any discrete decisions fixed.
GradCheckResult finite_difference_check(const std::string& module, const LossBuilder& loss,
                                        const std::vector<std::pair<std::string, Tensor*>>& tensors,
                                        double step = kGradCheckStep);

// Canned checks at desk scale (f64, soft selection, decisions frozen).
GradCheckResult check_selector(std::uint64_t seed);
GradCheckResult check_sampler(std::uint64_t seed);
GradCheckResult check_merger(std::uint64_t seed);
// Full pipeline: L=6, M=8, d=16, L*=3, R=2.
GradCheckResult check_pipeline(std::uint64_t seed);

}  // namespace bvllm
