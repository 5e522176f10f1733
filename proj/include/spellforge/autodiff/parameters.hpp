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

#include <string>
#include <utility>
#include <vector>

#include "spellforge/autodiff/tensor.hpp"
#include "spellforge/error.hpp"
#include "spellforge/rng.hpp"

namespace spellforge::ad {

/// Named, ordered collection of trainable tensors. The order is the
/// serialization and optimizer order.
template <typename T>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  Tensor<T>& add(std::string name, Tensor<T> tensor) {
    for (const auto& e : entries_) {
      if (e.name == name) fail(ErrorCode::kInvalidArgument, "duplicate parameter name " + name);
    }
    tensor.set_requires_grad(true);
    entries_.push_back({std::move(name), std::move(tensor)});
    return entries_.back().tensor;
  }

  void append(const ParameterSet& other) {
    for (const auto& e : other.entries_) add(e.name, e.tensor);
  }

  Tensor<T>* find(const std::string& name) {
    for (auto& e : entries_) {
      if (e.name == name) return &e.tensor;
    }
    return nullptr;
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

 private:
  std::vector<Entry> entries_;
};

template <typename T>
Tensor<T> truncated_normal_tensor(Shape shape, double stddev, Rng& rng) {
  auto t = Tensor<T>::zeros(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.truncated_normal(stddev));
  return t;
}

template <typename T>
Tensor<T> filled_tensor(Shape shape, T value) {
  auto t = Tensor<T>::zeros(std::move(shape));
  for (auto& v : t.values()) v = value;
  return t;
}

}  // namespace spellforge::ad
