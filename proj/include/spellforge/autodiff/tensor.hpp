// Copyright 2026 The Spellforge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "spellforge/error.hpp"

namespace spellforge::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

// Graph recording switch. Disabled inside NoGradGuard scopes (inference),
// where kernels skip saving backward closures.
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

class NoGradGuard {
 public:
  NoGradGuard() : prev_(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

/// Dense row-major array participating in a reverse-mode graph. Copies share
/// the underlying node.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value.assign(numel_of(shape), T(0));
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (values.size() != numel_of(shape)) {
      fail(ErrorCode::kShapeMismatch, "tensor data has " + std::to_string(values.size()) +
                                          " elements, shape " + ad::to_string(shape) + " needs " +
                                          std::to_string(numel_of(shape)));
    }
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(T v, bool requires_grad = false) { return from({}, {v}, requires_grad); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t rows() const { return require_rank2().shape[0]; }
  std::size_t cols() const { return require_rank2().shape[1]; }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  std::vector<T>& values() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  // Zero-filled if nothing reached this tensor.
  std::span<T> grad() { return node_->ensure_grad(); }
  std::span<const T> grad() const { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool r) { node_->requires_grad = r; }

  T item() const {
    if (numel() != 1) fail(ErrorCode::kShapeMismatch, "item() on tensor of shape " + ad::to_string(shape()));
    return node_->value[0];
  }
  T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  // Detached copy of the data (no graph link).
  Tensor clone() const { return from(shape(), values(), false); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  const Node<T>& require_rank2() const {
    if (node_->shape.size() != 2) {
      fail(ErrorCode::kShapeMismatch, "expected a matrix, got shape " + ad::to_string(node_->shape));
    }
    return *node_;
  }

  std::shared_ptr<Node<T>> node_;
};

// Creates the output node of a kernel. Parents and the backward closure are
// only kept when gradients are being recorded and some input needs them.
template <typename T>
Tensor<T> make_result(Shape shape, std::initializer_list<Tensor<T>> inputs, const char* op) {
  auto out = Tensor<T>::zeros(std::move(shape));
  auto* node = out.node();
  node->op = op;
  if (grad_mode_flag()) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) node->requires_grad = true;
    }
    if (node->requires_grad) {
      for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
    }
  }
  return out;
}

/// Reverse-mode accumulation from a scalar. Leaf grads accumulate, so callers
/// zero them between steps.
template <typename T>
void backward(Tensor<T>& loss) {
  if (loss.numel() != 1) {
    fail(ErrorCode::kShapeMismatch, "backward() needs a scalar, got shape " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  std::vector<Node<T>*> topo;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      topo.push_back(n);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += T(1);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
  }
}

}  // namespace spellforge::ad
