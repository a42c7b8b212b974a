// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "textseg/common.hpp"

namespace textseg {

// Reverse-mode tape. Each op builds a Node holding its value, its parents and
// a closure that scatters the node's gradient into the parents' gradients.
// Scalar type S is a template parameter: float for training, double for
// finite-difference verification.

namespace detail {
inline thread_local int no_grad_depth = 0;
}

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

// RAII guard: ops executed inside record no graph. Used by the inference path
// and by loops that only need values.
struct NoGradGuard {
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename S>
struct Node {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // lazily sized by backward()
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // may be empty (leaves, no-grad)
};

template <typename S>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<S>> n) : n_(std::move(n)) {}

  // leaf carrying data, no gradient
  static Tensor constant(Shape shape, std::vector<S> value) {
    if (numel(shape) != value.size())
      throw ShapeError("constant: shape " + shape_str(shape) + " does not hold " +
                       std::to_string(value.size()) + " values");
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    return Tensor(n);
  }

  static Tensor zeros(Shape shape) {
    std::vector<S> v(numel(shape), S(0));
    return constant(std::move(shape), std::move(v));
  }

  static Tensor full(Shape shape, S fill) {
    std::vector<S> v(numel(shape), fill);
    return constant(std::move(shape), std::move(v));
  }

  static Tensor scalar(S v) { return constant({1}, {v}); }

  // leaf that participates in backward (model parameter or probed input)
  static Tensor param(Shape shape, std::vector<S> value) {
    Tensor t = constant(std::move(shape), std::move(value));
    t.n_->requires_grad = true;
    return t;
  }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  size_t size() const { return n_->value.size(); }
  size_t dim(size_t i) const { return n_->shape.at(i); }
  size_t ndim() const { return n_->shape.size(); }

  const std::vector<S>& data() const { return n_->value; }
  std::vector<S>& mutable_data() { return n_->value; }
  const std::vector<S>& grad() const { return n_->grad; }
  void clear_grad() { n_->grad.clear(); }
  bool requires_grad() const { return n_->requires_grad; }

  S item() const {
    if (n_->value.size() != 1)
      throw ShapeError("item: tensor has " + std::to_string(n_->value.size()) + " elements");
    return n_->value[0];
  }

  std::shared_ptr<Node<S>> node() const { return n_; }

  // Detached view: shares the value buffer's contents (copied) but cuts the
  // tape, so downstream use produces no gradient into this subgraph.
  Tensor detach() const {
    auto n = std::make_shared<Node<S>>();
    n->shape = n_->shape;
    n->value = n_->value;
    n->op = "detach";
    return Tensor(n);
  }

 private:
  std::shared_ptr<Node<S>> n_;
};

// Recorded graph in topological order (parents before children). The order is
// a pure function of graph structure: deterministic DFS from the root,
// visiting parents in the order the ops attached them.
template <typename S>
struct ComputationRecord {
  std::vector<std::shared_ptr<Node<S>>> order;

  size_t size() const { return order.size(); }

  std::vector<std::string> op_names() const {
    std::vector<std::string> v;
    v.reserve(order.size());
    for (auto& n : order) v.push_back(n->op);
    return v;
  }
};

template <typename S>
ComputationRecord<S> record_graph(const Tensor<S>& root) {
  ComputationRecord<S> rec;
  std::unordered_set<const Node<S>*> seen;
  // iterative post-order DFS
  std::vector<std::pair<std::shared_ptr<Node<S>>, size_t>> stack;
  stack.push_back({root.node(), 0});
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto p = node->parents[next++];
      if (seen.insert(p.get()).second) stack.push_back({p, 0});
    } else {
      rec.order.push_back(node);
      stack.pop_back();
    }
  }
  return rec;
}

// Full backward from a scalar root. Gradients are zeroed first and built by
// accumulation, so repeated calls on the same graph replay bit-identically.
template <typename S>
ComputationRecord<S> backward(const Tensor<S>& root) {
  if (root.size() != 1)
    throw ShapeError("backward: root must be scalar, got " + shape_str(root.shape()));
  if (!std::isfinite(static_cast<double>(root.item())))
    throw NumericError("backward: root value is not finite");
  auto rec = record_graph(root);
  for (auto& n : rec.order) {
    n->grad.assign(n->value.size(), S(0));
  }
  root.node()->grad[0] = S(1);
  for (auto it = rec.order.rbegin(); it != rec.order.rend(); ++it) {
    Node<S>& n = **it;
    if (n.requires_grad && n.backward_fn) n.backward_fn(n);
  }
  return rec;
}

// Helper used by every op to wire a result node.
template <typename S>
Tensor<S> make_op_node(const char* op, Shape shape, std::vector<S> value,
                       std::vector<Tensor<S>> inputs,
                       std::function<void(Node<S>&)> backward_fn) {
  auto n = std::make_shared<Node<S>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  if (grad_enabled()) {
    bool any = false;
    for (auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(inputs.size());
      for (auto& t : inputs) n->parents.push_back(t.node());
      n->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor<S>(n);
}

}  // namespace textseg
