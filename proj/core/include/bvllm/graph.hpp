#pragma once

#include <cstddef>
#include <functional>
#include <unordered_map>
#include <vector>

#include "bvllm/tensor.hpp"

namespace bvllm {

class Graph;

// Handle to a node on a Graph tape. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Append-only reverse-mode tape. Nodes are recorded in creation order, which
// is a topological order, so backward walks the tape once in reverse.
// A Graph is confined to one thread; run independent graphs in parallel.
class Graph {
 public:
  // Receives the gradient flowing into a node and accumulates into parents.
  using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value);

  // Binds an externally owned parameter tensor as a gradient leaf. Binding the
  // same object twice returns the same node; the tensor must outlive the graph
  // and stay unmodified while it is in use.
  Var param(const Tensor& parameter);
  // Like param() but without gradient tracking.
  Var frozen(const Tensor& parameter);

  Var record(Tensor value, const std::vector<Var>& parents, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  // Runs reverse accumulation from a 1x1 root.
  void backward(Var root);
  // Runs reverse accumulation seeded with an explicit output gradient.
  void backward(Var root, const Tensor& seed);

  // Gradient of a node after backward(); zeros if nothing reached it.
  Tensor grad(Var v) const;
  // Gradient of a bound parameter; zeros if it was never bound or reached.
  Tensor grad_of(const Tensor& parameter) const;
  bool is_bound(const Tensor& parameter) const { return bound_.contains(&parameter); }

  // Adds `contribution` into the gradient buffer of `v` (no-op for nodes
  // that do not require gradients).
  void accumulate(Var v, const Tensor& contribution);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, std::size_t> bound_;
};

}  // namespace bvllm
