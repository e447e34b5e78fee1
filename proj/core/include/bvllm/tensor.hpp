#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace bvllm {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major f64 tensor. Most of the library works on rank-2 views;
// rank 3 shows up only for video bodies ([frames, tokens, dim]).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor filled(std::size_t rows, std::size_t cols, double value);
  static Tensor identity(std::size_t n);
  // Rows given as nested braces, e.g. from_rows({{1, 2}, {3, 4}}).
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor row_vector(std::span<const double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-2 accessors; a rank-1 tensor is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  Tensor reshaped(Shape shape) const;
  Tensor rows_slice(std::size_t begin, std::size_t end) const;

  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Plain (non-differentiable) kernels shared by the graph ops and by the
// discrete decision code paths.
namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b);
// a · bᵀ
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// aᵀ · b
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x);

inline constexpr double kCosineEps = 1e-8;

// entry (i, j) = <a_i, b_j> / (max(|a_i|, eps) * max(|b_j|, eps))
Tensor cosine_matrix(const Tensor& a, const Tensor& b, double eps = kCosineEps);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace kernels

}  // namespace bvllm
