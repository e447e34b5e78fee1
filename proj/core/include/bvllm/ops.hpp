#pragma once

#include <cstddef>
#include <vector>

#include "bvllm/graph.hpp"
#include "bvllm/tensor.hpp"

// Differentiable operations on rank-2 graph nodes. Every op records its
// vector-Jacobian product on the tape of its inputs. The only broadcast is a
// row-vector bias added to every row (add_row).
namespace bvllm::ops {

Var matmul(Var a, Var b);
// a · bᵀ
Var matmul_nt(Var a, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double factor);
// Adds a fixed tensor of the same shape (no gradient to the tensor).
Var add_constant(Var a, const Tensor& c);
// Adds a 1 x n (or rank-1 n) bias to every row of an m x n input.
Var add_row(Var a, Var bias);
Var mul(Var a, Var b);

Var softmax_rows(Var x);
Var log_softmax_rows(Var x);

inline constexpr double kLayerNormEps = 1e-5;
Var layernorm(Var x, Var gain, Var bias);

// Exact (erf) GELU.
Var gelu(Var x);

Var cosine_matrix(Var a, Var b, double eps = kernels::kCosineEps);

Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var reshape(Var a, std::size_t rows, std::size_t cols);

// Output row g is the arithmetic mean of the input rows listed in groups[g].
// The grouping itself carries no gradient.
Var group_mean_rows(Var a, const std::vector<std::vector<std::size_t>>& groups);

// weights · values, except that a weight row that is exactly one-hot copies
// the selected value row verbatim. Gradients are those of the plain product.
Var mix_rows(Var weights, Var values);

// Forward value is `hard`; the backward pass hands the incoming gradient to
// `soft` unchanged (straight-through estimator).
Var straight_through(const Tensor& hard, Var soft);

Var sum(Var a);
Var mean(Var a);
// sum_ij a_ij * w_ij for a fixed weight tensor.
Var weighted_sum(Var a, const Tensor& weights);

}  // namespace bvllm::ops
