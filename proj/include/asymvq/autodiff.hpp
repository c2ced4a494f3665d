#pragma once

#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "asymvq/tensor.hpp"

namespace asymvq {

/// One value in the dynamic computation graph.
///
/// `requires_grad` is structural: it is true for trainable leaves and for every node computed
/// from one. `active` is the per-pass flag consulted by backward closures; it equals
/// `requires_grad` during a full pass and is narrowed during a restricted `gradients` pass.
template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  bool active = false;

  /// Gradient buffer, zero-initialised on first touch.
  Tensor<Scalar>& grad_buffer() {
    if (grad.shape() != value.shape()) grad = Tensor<Scalar>(value.shape());
    return grad;
  }
  void accumulate(const Tensor<Scalar>& g) { grad_buffer().array() += g.array(); }
  [[nodiscard]] bool wants_grad() const { return active; }
};

/// Handle to a graph node. Copies share the node.
template <typename Scalar>
class Var {
 public:
  using NodeT = Node<Scalar>;

  Var() = default;
  explicit Var(std::shared_ptr<NodeT> node) : node_(std::move(node)) {}

  /// Leaf holding `value`; trainable leaves pass `requires_grad = true`.
  static Var leaf(Tensor<Scalar> value, bool requires_grad = false) {
    auto node = std::make_shared<NodeT>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    node->active = requires_grad;
    return Var(std::move(node));
  }

  [[nodiscard]] bool defined() const { return static_cast<bool>(node_); }
  [[nodiscard]] const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& mutable_value() { return node_->value; }
  [[nodiscard]] const Shape& shape() const { return node_->value.shape(); }
  [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) {
    node_->requires_grad = on;
    node_->active = on;
  }
  [[nodiscard]] const Tensor<Scalar>& grad() const { return node_->grad; }
  Tensor<Scalar>& grad_buffer() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Tensor<Scalar>(); }

  [[nodiscard]] NodeT* node() const { return node_.get(); }
  [[nodiscard]] const std::shared_ptr<NodeT>& shared() const { return node_; }

 private:
  std::shared_ptr<NodeT> node_;
};

/// Builds a node from `value` and `parents`; the closure is kept only if some parent needs a
/// gradient.
template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, std::vector<Var<Scalar>> parents,
                        std::function<void(Node<Scalar>&)> backward_fn) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  node->requires_grad = needs;
  node->active = needs;
  if (needs) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.shared());
    node->backward_fn = std::move(backward_fn);
  }
  return Var<Scalar>(std::move(node));
}

/// Same value, cut from the graph (the stop-gradient operator).
template <typename Scalar>
Var<Scalar> detach(const Var<Scalar>& v) {
  return Var<Scalar>::leaf(v.value(), false);
}

namespace detail {

template <typename Scalar>
std::vector<Node<Scalar>*> topo_order(Node<Scalar>* root) {
  std::vector<Node<Scalar>*> order;
  std::unordered_set<Node<Scalar>*> seen;
  std::vector<std::pair<Node<Scalar>*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<Scalar>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

}  // namespace detail

/// Reverse-mode sweep from a scalar `root`, accumulating into the `.grad` of every trainable
/// leaf reachable from it.
template <typename Scalar>
void backward(const Var<Scalar>& root) {
  if (root.shape().size() != 1) throw ShapeError("backward expects a scalar root, got " + root.shape().str());
  if (!root.requires_grad()) return;
  auto order = detail::topo_order(root.node());
  for (auto* n : order) n->active = n->requires_grad;
  root.node()->grad_buffer().array() += Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
    if (!n->parents.empty()) n->grad = Tensor<Scalar>();  // interior grads are transient
  }
}

/// Gradients of `root` with respect to `wrt` only. Leaves every `.grad` buffer as it was and
/// visits only nodes that lie on a path from some `wrt` entry to `root`.
template <typename Scalar>
std::vector<Tensor<Scalar>> gradients(const Var<Scalar>& root, std::span<const Var<Scalar>> wrt) {
  std::vector<Tensor<Scalar>> out;
  out.reserve(wrt.size());
  if (!root.requires_grad()) {
    for (const auto& v : wrt) out.emplace_back(v.shape());
    return out;
  }
  auto order = detail::topo_order(root.node());
  std::unordered_set<Node<Scalar>*> targets;
  for (const auto& v : wrt) targets.insert(v.node());

  std::unordered_map<Node<Scalar>*, Tensor<Scalar>> stash;
  for (auto* n : order) {
    bool depends = targets.contains(n);
    for (const auto& p : n->parents) depends = depends || p->active;
    // `active` is reused here as the forward "depends on a target" mark; order is parents-first.
    n->active = depends && n->requires_grad;
    if (n->active) {
      stash.emplace(n, std::move(n->grad));
      n->grad = Tensor<Scalar>();
    }
  }
  // Nodes outside `order` but inside the wrt list are untouched leaves with zero gradient.
  if (root.node()->active) {
    root.node()->grad_buffer().array() += Scalar(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<Scalar>* n = *it;
      if (n->active && n->backward_fn && n->grad.size() != 0 && !targets.contains(n)) n->backward_fn(*n);
    }
  }
  for (const auto& v : wrt) {
    auto* n = v.node();
    if (stash.contains(n) && n->grad.size() != 0) out.push_back(n->grad);
    else out.emplace_back(v.shape());
  }
  for (auto* n : order) {
    if (auto it = stash.find(n); it != stash.end()) n->grad = std::move(it->second);
    n->active = n->requires_grad;
  }
  return out;
}

}  // namespace asymvq
