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

#include <cstdint>
#include <span>
#include <vector>

#include "spellforge/autodiff/ops.hpp"
#include "spellforge/autodiff/tensor.hpp"
#include "spellforge/error.hpp"
#include "spellforge/tokenize.hpp"
#include "spellforge/vocabulary.hpp"

namespace spellforge {

// One encoded noisy sentence with its gold word ids.
struct TrainingExample {
  EncodedSentence input;
  std::vector<SymbolId> gold;
};

// Row-wise argmax; ties go to the lowest column.
template <typename T>
std::vector<std::size_t> argmax_rows(const ad::Tensor<T>& logits) {
  const std::size_t m = logits.rows(), c = logits.cols();
  const auto v = logits.data();
  std::vector<std::size_t> out(m, 0);
  for (std::size_t r = 0; r < m; ++r) {
    const T* row = v.data() + r * c;
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[r] = best;
  }
  return out;
}

// Word labels exclude the specials: label = id - num_specials.
inline std::int32_t word_label(SymbolId id, const Vocabulary& word_vocab) {
  const auto n = static_cast<SymbolId>(word_vocab.num_specials());
  if (id < n || static_cast<std::size_t>(id) >= word_vocab.size()) {
    fail(ErrorCode::kInvalidArgument, "gold word id " + std::to_string(id) + " is not a regular vocabulary entry");
  }
  return id - n;
}

inline SymbolId word_from_label(std::size_t label, const Vocabulary& word_vocab) {
  return static_cast<SymbolId>(label + word_vocab.num_specials());
}

template <typename Seq>
std::vector<std::vector<std::int32_t>> as_id_seqs(const std::vector<const Seq*>& seqs) {
  std::vector<std::vector<std::int32_t>> out;
  out.reserve(seqs.size());
  for (const auto* s : seqs) out.emplace_back(s->begin(), s->end());
  return out;
}

}  // namespace spellforge
