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
#include <functional>
#include <string>
#include <vector>

#include "spellforge/autodiff/parameters.hpp"
#include "spellforge/rng.hpp"

namespace spellforge::ad {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  std::size_t min_samples = 200;
  std::uint64_t seed = 1;
  // Gradients with both magnitudes below this floor are compared in
  // absolute terms against floor * tolerance.
  double floor = 1e-7;
};

struct GradCheckEntry {
  std::string parameter;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};

struct GradCheckReport {
  std::size_t checked = 0;
  double max_rel_error = 0;
  GradCheckEntry worst;
  bool passed = false;
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares analytic gradients with central differences on a deterministic
/// sample of parameter scalars. Every tensor contributes at least one sample
/// and the total is at least min_samples (or all scalars, if fewer).
/// `loss_fn` must rebuild the graph from the current parameter values.
/// `tamper` lets tests corrupt the analytic gradients.
template <typename T>
GradCheckReport finite_difference_check(ParameterSet<T>& params, const std::function<Tensor<T>()>& loss_fn,
                                        const GradCheckOptions& opts = {},
                                        const std::function<void(ParameterSet<T>&)>& tamper = {}) {
  params.zero_grad();
  auto loss = loss_fn();
  backward(loss);
  if (tamper) tamper(params);

  // smallest per-tensor quota whose capped sum reaches min_samples
  const std::size_t total = params.num_scalars();
  const std::size_t target = std::min(opts.min_samples, total);
  std::size_t per_tensor = 1;
  for (;;) {
    std::size_t covered = 0;
    for (const auto& e : params.entries()) covered += std::min(e.tensor.numel(), per_tensor);
    if (covered >= target) break;
    ++per_tensor;
  }
  Rng rng(opts.seed);
  GradCheckReport report;
  for (auto& e : params.entries()) {
    const std::size_t n = e.tensor.numel();
    std::vector<std::size_t> picks(n);
    for (std::size_t i = 0; i < n; ++i) picks[i] = i;
    if (n > per_tensor) {
      rng.shuffle(picks);
      picks.resize(per_tensor);
    }
    const std::vector<T> analytic(e.tensor.grad().begin(), e.tensor.grad().end());
    for (std::size_t idx : picks) {
      T& slot = e.tensor.data()[idx];
      const T saved = slot;
      double plus, minus;
      {
        NoGradGuard guard;
        slot = saved + static_cast<T>(opts.step);
        plus = static_cast<double>(loss_fn().item());
        slot = saved - static_cast<T>(opts.step);
        minus = static_cast<double>(loss_fn().item());
      }
      slot = saved;
      const double numeric = (plus - minus) / (2.0 * opts.step);
      const double a = static_cast<double>(analytic[idx]);
      const double err = relative_error(a, numeric, opts.floor);
      ++report.checked;
      if (err > report.max_rel_error || report.checked == 1) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        if (err >= report.worst.rel_error) report.worst = {e.name, idx, a, numeric, err};
      }
    }
  }
  report.passed = report.max_rel_error < opts.tolerance;
  return report;
}

}  // namespace spellforge::ad
