#include "bvllm/graph.hpp"

#include "bvllm/error.hpp"

namespace bvllm {

const Tensor& Var::value() const { return graph_->value(*this); }

bool Var::requires_grad() const { return graph_->requires_grad(*this); }

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Graph::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(const Tensor& parameter) {
  if (auto it = bound_.find(&parameter); it != bound_.end()) return Var(this, it->second);
  Var v = leaf(parameter);
  bound_.emplace(&parameter, v.id());
  return v;
}

Var Graph::frozen(const Tensor& parameter) {
  if (auto it = bound_.find(&parameter); it != bound_.end()) return Var(this, it->second);
  Var v = constant(parameter);
  bound_.emplace(&parameter, v.id());
  return v;
}

Var Graph::record(Tensor value, const std::vector<Var>& parents, BackwardFn backward) {
  bool needs = false;
  for (const Var& p : parents) {
    if (&p.graph() != this) throw Error("graph op mixes nodes from different graphs");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

void Graph::backward(Var root) {
  const Tensor& v = value(root);
  if (v.size() != 1) {
    throw DimensionError("backward() without a seed needs a scalar root, got " +
                         shape_string(v.shape()));
  }
  backward(root, Tensor(v.shape(), {1.0}));
}

void Graph::backward(Var root, const Tensor& seed) {
  if (seed.size() != value(root).size()) {
    throw DimensionError("backward seed " + shape_string(seed.shape()) + " does not match root " +
                         shape_string(value(root).shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor{};
  accumulate(root, seed);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    // Parents always have lower ids, so the buffer outlives the call.
    n.backward(*this, n.grad);
  }
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

Tensor Graph::grad_of(const Tensor& parameter) const {
  auto it = bound_.find(&parameter);
  if (it == bound_.end()) return Tensor(parameter.shape());
  return grad(Var(const_cast<Graph*>(this), it->second));
}

void Graph::accumulate(Var v, const Tensor& contribution) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (contribution.size() != n.value.size()) {
    throw DimensionError("gradient " + shape_string(contribution.shape()) +
                         " does not match node " + shape_string(n.value.shape()));
  }
  if (n.grad.empty()) {
    n.grad = Tensor(n.value.shape(), contribution.storage());
    return;
  }
  auto dst = n.grad.data();
  auto src = contribution.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace bvllm
