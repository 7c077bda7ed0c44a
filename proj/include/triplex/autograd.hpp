// Copyright 2026 The Triplex Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "triplex/tensor.hpp"

namespace triplex {

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily on first accumulation
  bool requires_grad = false;
  // Parents are held by shared_ptr so the graph stays alive as long as the
  // output does. The backward closure only captures raw Node pointers.
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Tensor& upstream)> backward;
};

inline Tensor& grad_of(Node* n) {
  if (n->grad.empty()) n->grad = Tensor::zeros(n->value.dims);
  return n->grad;
}

}  // namespace detail

// Handle to a node of the dynamically built computation graph. Copies share
// the node; leaves with requires_grad accumulate gradients in backward().
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Var constant(Tensor value) { return Var(std::move(value), false); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  void zero_grad() { node_->grad = Tensor(); }

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Builds an op node. When no parent requires grad the parents and backward
// closure are dropped and the result is a plain constant.
inline Var make_op(Tensor value, std::vector<Var> parents,
                   std::function<void(const Tensor& upstream)> backward) {
  bool needs = false;
  for (const Var& p : parents) needs = needs || p.requires_grad();
  Var out(std::move(value), needs);
  if (needs) {
    auto* n = out.node();
    n->parents.reserve(parents.size());
    for (Var& p : parents) n->parents.push_back(p.node_ptr());
    n->backward = std::move(backward);
  }
  return out;
}

// Reverse-mode sweep from a scalar root. Gradients accumulate into every
// reachable node with requires_grad; leaves keep them until zero_grad().
inline void backward(const Var& root) {
  if (!root.defined()) throw ShapeMismatch("backward on empty Var");
  if (root.value().size() != 1)
    throw ShapeMismatch("backward root must be scalar, got " +
                        root.value().shape_str());
  if (!root.requires_grad()) return;

  // iterative post-order topo sort over requires_grad nodes
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  struct Frame {
    detail::Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root.node(), 0});
  visited.insert(root.node());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::Node* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  detail::grad_of(root.node()).data[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward) n->backward(n->grad);
  }
}

}  // namespace triplex
