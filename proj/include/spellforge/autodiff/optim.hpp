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
#include <cmath>
#include <cstdint>
#include <vector>

#include "spellforge/autodiff/parameters.hpp"
#include "spellforge/error.hpp"

namespace spellforge::ad {

inline constexpr double kDefaultLearningRate = 5e-5;

struct AdamConfig {
  double base_lr = kDefaultLearningRate;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t total_steps = 1;
};

/// Adam with bias correction and a linear decay to zero over total_steps
/// (no warmup).
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterSet<T>& params, AdamConfig config) : config_(config) {
    for (const auto& e : params.entries()) {
      first_.emplace_back(e.tensor.numel(), 0.0);
      second_.emplace_back(e.tensor.numel(), 0.0);
    }
  }

  const AdamConfig& config() const { return config_; }
  std::uint64_t step_count() const { return step_; }
  std::uint64_t skipped_steps() const { return skipped_; }

  double learning_rate() const {
    const double progress = static_cast<double>(step_) / static_cast<double>(std::max<std::uint64_t>(config_.total_steps, 1));
    return config_.base_lr * std::max(0.0, 1.0 - progress);
  }

  // Returns false (and counts a skipped step) if any gradient is non-finite.
  bool step(ParameterSet<T>& params) {
    if (params.size() != first_.size()) fail(ErrorCode::kShapeMismatch, "optimizer state does not match parameters");
    for (auto& e : params.entries()) {
      for (T g : e.tensor.grad()) {
        if (!std::isfinite(g)) {
          ++skipped_;
          return false;
        }
      }
    }
    const double lr = learning_rate();
    const double t = static_cast<double>(step_ + 1);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    for (std::size_t p = 0; p < first_.size(); ++p) {
      auto& tensor = params.entries()[p].tensor;
      if (first_[p].size() != tensor.numel()) fail(ErrorCode::kShapeMismatch, "optimizer moment shape mismatch");
      auto value = tensor.data();
      auto grad = tensor.grad();
      auto& m = first_[p];
      auto& v = second_[p];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = static_cast<double>(grad[i]);
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        const double update = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
        value[i] = static_cast<T>(static_cast<double>(value[i]) - update);
      }
    }
    ++step_;
    return true;
  }

  // Raw state, for checkpoints.
  std::vector<std::vector<double>>& first_moments() { return first_; }
  std::vector<std::vector<double>>& second_moments() { return second_; }
  void set_step_count(std::uint64_t s) { step_ = s; }

 private:
  AdamConfig config_;
  std::vector<std::vector<double>> first_, second_;
  std::uint64_t step_ = 0;
  std::uint64_t skipped_ = 0;
};

}  // namespace spellforge::ad
