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

#include <optional>
#include <span>
#include <vector>

#include "spellforge/autodiff/parameters.hpp"
#include "spellforge/autodiff/transformer.hpp"
#include "spellforge/models/common.hpp"
#include "spellforge/models/config.hpp"
#include "spellforge/rng.hpp"

namespace spellforge {

struct WordCharForwardOptions {
  // Replace every char-branch output by zeros (the word-only limit of h_S).
  bool zero_char_branch = false;
};

/// h_S = [h_word; h_char], p = softmax(W h_S + b). The word-only and
/// char-only ablations drop one branch; W then has only the other's width.
template <typename T>
class WordCharModel {
 public:
  WordCharModel(Arch arch, ModelConfig config, const TokenizerResources& res, std::uint64_t seed)
      : arch_(arch), config_(std::move(config)), word_vocab_(res.word_vocab), char_vocab_(res.char_vocab) {
    if (arch == Arch::kSubword) fail(ErrorCode::kConfig, "WordCharModel cannot be built with the subword arch");
    if (!word_vocab_ || !char_vocab_) fail(ErrorCode::kConfig, "WordCharModel needs word and char vocabularies");
    if (word_vocab_->num_regular() == 0) fail(ErrorCode::kConfig, "word vocabulary has no regular entries");
    Rng rng(seed);
    std::size_t width = 0;
    if (uses_word_branch(arch)) {
      config_.word.vocab_size = word_vocab_->size();
      word_.emplace(config_.word, "word", rng, config_.init_std);
      params_.append(word_->parameters());
      width += config_.word.hidden_size;
    }
    if (uses_char_branch(arch)) {
      config_.chars.vocab_size = char_vocab_->size();
      if (config_.chars.max_seq_len < 2) fail(ErrorCode::kConfig, "char max_seq_length must be at least 2");
      chars_.emplace(config_.chars, "char", rng, config_.init_std);
      params_.append(chars_->parameters());
      width += config_.chars.hidden_size;
    }
    const std::size_t labels = word_vocab_->num_regular();
    out_w_ = params_.add("output.weight", ad::truncated_normal_tensor<T>({width, labels}, config_.init_std, rng));
    out_b_ = params_.add("output.bias", ad::filled_tensor<T>({labels}, T(0)));
  }

  WordCharModel(const WordCharModel&) = delete;
  WordCharModel& operator=(const WordCharModel&) = delete;
  WordCharModel(WordCharModel&&) noexcept = default;
  WordCharModel& operator=(WordCharModel&&) noexcept = default;

  Arch arch() const { return arch_; }
  const ModelConfig& config() const { return config_; }
  ad::ParameterSet<T>& parameters() { return params_; }
  const ad::ParameterSet<T>& parameters() const { return params_; }
  std::size_t num_labels() const { return word_vocab_->num_regular(); }
  std::size_t projection_width() const { return out_w_.rows(); }
  const Vocabulary& word_vocab() const { return *word_vocab_; }

  // Sentence length as the encoders see it.
  std::size_t input_length(const EncodedSentence& s) const { return s.word_ids.size(); }
  std::size_t max_input_length() const {
    return uses_word_branch(arch_) ? config_.word.max_seq_len : static_cast<std::size_t>(-1);
  }

  // Logits for every word of every sentence, stacked: [sum n_i, |labels|].
  ad::Tensor<T> logits(const std::vector<const EncodedSentence*>& batch, const ad::ForwardContext& ctx,
                       WordCharForwardOptions opt = {}) const {
    if (batch.empty()) fail(ErrorCode::kInvalidArgument, "empty batch");
    std::size_t total = 0;
    for (const auto* s : batch) {
      if (s->word_ids.empty()) fail(ErrorCode::kInvalidArgument, "empty sentence");
      if (s->char_ids.size() != s->word_ids.size()) {
        fail(ErrorCode::kShapeMismatch, "sentence has " + std::to_string(s->word_ids.size()) + " words but " +
                                            std::to_string(s->char_ids.size()) + " char sequences");
      }
      total += s->word_ids.size();
    }
    std::optional<ad::Tensor<T>> h;
    if (word_) {
      std::vector<const std::vector<SymbolId>*> seqs;
      for (const auto* s : batch) seqs.push_back(&s->word_ids);
      const auto packed = ad::SequenceBatch::pack(as_id_seqs(seqs), word_vocab_->pad_id());
      auto out = word_->forward(packed, ctx);
      std::vector<std::size_t> rows;
      rows.reserve(total);
      for (std::size_t b = 0; b < batch.size(); ++b) {
        for (std::size_t k = 0; k < packed.lengths[b]; ++k) rows.push_back(b * packed.len + k);
      }
      h = ad::gather_rows(out, std::span<const std::size_t>(rows));
    }
    if (chars_) {
      ad::Tensor<T> hc;
      if (opt.zero_char_branch) {
        hc = ad::Tensor<T>::zeros({total, config_.chars.hidden_size});
      } else {
        std::vector<const std::vector<SymbolId>*> seqs;
        for (const auto* s : batch) {
          for (const auto& c : s->char_ids) {
            if (c.size() > config_.chars.max_seq_len) {
              fail(ErrorCode::kInvalidArgument, "char sequence longer than char max_seq_length");
            }
            seqs.push_back(&c);
          }
        }
        const auto packed = ad::SequenceBatch::pack(as_id_seqs(seqs), char_vocab_->pad_id());
        auto out = chars_->forward(packed, ctx);
        std::vector<std::size_t> rows(total);
        for (std::size_t w = 0; w < total; ++w) rows[w] = w * packed.len;  // [CLS] position
        hc = ad::gather_rows(out, std::span<const std::size_t>(rows));
      }
      h = h ? ad::concat_cols(*h, hc) : hc;
    }
    return ad::linear(*h, out_w_, out_b_);
  }

  // Mean cross-entropy over all words of the batch.
  ad::Tensor<T> loss(const std::vector<const TrainingExample*>& batch, const ad::ForwardContext& ctx) const {
    std::vector<const EncodedSentence*> inputs;
    std::vector<std::int32_t> gold;
    for (const auto* ex : batch) {
      if (ex->gold.size() != ex->input.word_ids.size()) {
        fail(ErrorCode::kShapeMismatch, "gold and input word counts differ");
      }
      inputs.push_back(&ex->input);
      for (auto g : ex->gold) gold.push_back(word_label(g, *word_vocab_));
    }
    return ad::cross_entropy(logits(inputs, ctx), std::span<const std::int32_t>(gold));
  }

  // Eval-mode prediction: one in-vocabulary word id per input word.
  std::vector<std::vector<SymbolId>> predict(const std::vector<const EncodedSentence*>& batch,
                                             Bio2DecodeStats* = nullptr) const {
    ad::NoGradGuard guard;
    const auto best = argmax_rows(logits(batch, {}));
    std::vector<std::vector<SymbolId>> out;
    std::size_t r = 0;
    for (const auto* s : batch) {
      auto& words = out.emplace_back();
      for (std::size_t k = 0; k < s->word_ids.size(); ++k) words.push_back(word_from_label(best[r++], *word_vocab_));
    }
    return out;
  }

  ad::TransformerEncoder<T>* word_encoder() { return word_ ? &*word_ : nullptr; }
  ad::TransformerEncoder<T>* char_encoder() { return chars_ ? &*chars_ : nullptr; }
  ad::Tensor<T>& output_weight() { return out_w_; }
  ad::Tensor<T>& output_bias() { return out_b_; }

 private:
  Arch arch_;
  ModelConfig config_;
  const Vocabulary* word_vocab_;
  const Vocabulary* char_vocab_;
  std::optional<ad::TransformerEncoder<T>> word_, chars_;
  ad::ParameterSet<T> params_;
  ad::Tensor<T> out_w_, out_b_;
};

}  // namespace spellforge
