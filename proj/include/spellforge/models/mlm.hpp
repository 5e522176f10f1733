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

#include <cmath>
#include <span>
#include <vector>

#include "spellforge/autodiff/optim.hpp"
#include "spellforge/autodiff/parameters.hpp"
#include "spellforge/autodiff/transformer.hpp"
#include "spellforge/error.hpp"
#include "spellforge/rng.hpp"
#include "spellforge/tokenize.hpp"

namespace spellforge {

struct MlmConfig {
  double mask_rate = 0.15;
  std::size_t steps = 100;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
};

struct MaskingCounts {
  std::size_t positions = 0;
  std::size_t selected = 0;
  std::size_t masked = 0;      // replaced by <mask>
  std::size_t randomized = 0;  // replaced by a random regular subword
  std::size_t kept = 0;        // selected but left as is

  MaskingCounts& operator+=(const MaskingCounts& o) {
    positions += o.positions;
    selected += o.selected;
    masked += o.masked;
    randomized += o.randomized;
    kept += o.kept;
    return *this;
  }
};

struct MaskedSequence {
  std::vector<SymbolId> input;
  std::vector<std::int32_t> targets;   // original ids
  std::vector<std::uint8_t> ignore;    // 1 where not selected
};

// Each position is selected with probability rate; a selected position
// becomes <mask> (80%), a random regular subword (10%) or stays (10%).
inline MaskedSequence mlm_mask(std::span<const SymbolId> ids, const Vocabulary& subword_vocab, double rate, Rng& rng,
                               MaskingCounts* counts = nullptr) {
  if (!(rate > 0.0 && rate <= 1.0)) fail(ErrorCode::kConfig, "mask rate must lie in (0, 1]");
  if (subword_vocab.num_regular() == 0) fail(ErrorCode::kConfig, "subword vocabulary has no regular entries");
  MaskedSequence out;
  out.input.assign(ids.begin(), ids.end());
  out.targets.assign(ids.begin(), ids.end());
  out.ignore.assign(ids.size(), 1);
  MaskingCounts local;
  local.positions = ids.size();
  const SymbolId mask = subword_vocab.special_id(kMaskSymbol);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!rng.bernoulli(rate)) continue;
    out.ignore[i] = 0;
    ++local.selected;
    const double u = rng.uniform01();
    if (u < 0.8) {
      out.input[i] = mask;
      ++local.masked;
    } else if (u < 0.9) {
      out.input[i] = static_cast<SymbolId>(subword_vocab.num_specials() + rng.uniform_index(subword_vocab.num_regular()));
      ++local.randomized;
    } else {
      ++local.kept;
    }
  }
  if (counts) *counts += local;
  return out;
}

struct MlmResult {
  std::vector<double> losses;  // one per optimizer step
  MaskingCounts counts;
  std::size_t empty_batches = 0;  // batches where nothing was selected
  bool diverged = false;
};

/// Masked-subword pretraining of an encoder on clean text, through a
/// temporary output head that is discarded afterwards.
template <typename T>
MlmResult mlm_pretrain(ad::TransformerEncoder<T>& encoder, const std::vector<std::vector<SymbolId>>& corpus,
                       const Vocabulary& subword_vocab, const MlmConfig& config) {
  std::vector<const std::vector<SymbolId>*> usable;
  for (const auto& s : corpus) {
    if (!s.empty()) usable.push_back(&s);
  }
  if (usable.empty()) fail(ErrorCode::kInsufficientData, "masked-LM corpus is empty");
  if (config.batch_size == 0) fail(ErrorCode::kConfig, "batch_size must be positive");
  const auto& ec = encoder.config();
  if (subword_vocab.size() != ec.vocab_size) fail(ErrorCode::kShapeMismatch, "subword vocabulary does not match encoder");

  Rng rng(config.seed);
  ad::ParameterSet<T> head;
  auto w = head.add("mlm.weight", ad::truncated_normal_tensor<T>({ec.hidden_size, ec.vocab_size}, 0.02, rng));
  auto b = head.add("mlm.bias", ad::filled_tensor<T>({ec.vocab_size}, T(0)));
  ad::ParameterSet<T> all;
  all.append(encoder.parameters());
  all.append(head);
  ad::AdamConfig ac;
  ac.base_lr = config.learning_rate;
  ac.total_steps = std::max<std::size_t>(config.steps, 1);
  ad::Adam<T> adam(all, ac);

  MlmResult result;
  std::vector<std::size_t> order(usable.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();
  for (std::size_t step = 0; step < config.steps; ++step) {
    std::vector<std::vector<std::int32_t>> inputs;
    std::vector<std::int32_t> targets;
    std::vector<std::uint8_t> ignore;
    std::vector<std::size_t> lens;
    for (std::size_t k = 0; k < config.batch_size; ++k) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      const auto& s = *usable[order[cursor++]];
      const std::size_t n = std::min(s.size(), ec.max_seq_len);
      auto m = mlm_mask(std::span<const SymbolId>(s.data(), n), subword_vocab, config.mask_rate, rng, &result.counts);
      inputs.emplace_back(m.input.begin(), m.input.end());
      lens.push_back(n);
      targets.insert(targets.end(), m.targets.begin(), m.targets.end());
      ignore.insert(ignore.end(), m.ignore.begin(), m.ignore.end());
    }
    if (std::all_of(ignore.begin(), ignore.end(), [](auto x) { return x != 0; })) {
      ++result.empty_batches;
      continue;
    }
    const auto packed = ad::SequenceBatch::pack(inputs, subword_vocab.pad_id());
    std::vector<std::size_t> rows;
    for (std::size_t bi = 0; bi < lens.size(); ++bi) {
      for (std::size_t j = 0; j < lens[bi]; ++j) rows.push_back(bi * packed.len + j);
    }
    all.zero_grad();
    auto h = ad::gather_rows(encoder.forward(packed, ad::ForwardContext{true, &rng}), std::span<const std::size_t>(rows));
    auto loss = ad::cross_entropy(ad::linear(h, w, b), std::span<const std::int32_t>(targets),
                                  std::span<const std::uint8_t>(ignore));
    const double l = static_cast<double>(loss.item());
    if (!std::isfinite(l)) {
      result.diverged = true;
      break;
    }
    result.losses.push_back(l);
    ad::backward(loss);
    adam.step(all);
  }
  return result;
}

}  // namespace spellforge
