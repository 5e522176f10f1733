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

#include <span>
#include <vector>

#include "spellforge/autodiff/parameters.hpp"
#include "spellforge/autodiff/transformer.hpp"
#include "spellforge/models/common.hpp"
#include "spellforge/models/config.hpp"
#include "spellforge/rng.hpp"

namespace spellforge {

/// Subword encoder with a BIO2 tag head over 2 * |regular words| labels.
template <typename T>
class SubwordTagModel {
 public:
  SubwordTagModel(ModelConfig config, const TokenizerResources& res, std::uint64_t seed)
      : config_(std::move(config)), word_vocab_(res.word_vocab), subword_(res.subword) {
    if (!word_vocab_ || !subword_) fail(ErrorCode::kConfig, "SubwordTagModel needs word and subword resources");
    if (word_vocab_->num_regular() == 0) fail(ErrorCode::kConfig, "word vocabulary has no regular entries");
    Rng rng(seed);
    config_.subword.vocab_size = subword_->vocab().size();
    encoder_ = ad::TransformerEncoder<T>(config_.subword, "subword", rng, config_.init_std);
    params_.append(encoder_.parameters());
    const std::size_t labels = bio2_label_count(*word_vocab_);
    out_w_ = params_.add("output.weight",
                         ad::truncated_normal_tensor<T>({config_.subword.hidden_size, labels}, config_.init_std, rng));
    out_b_ = params_.add("output.bias", ad::filled_tensor<T>({labels}, T(0)));
  }

  SubwordTagModel(const SubwordTagModel&) = delete;
  SubwordTagModel& operator=(const SubwordTagModel&) = delete;
  SubwordTagModel(SubwordTagModel&&) noexcept = default;
  SubwordTagModel& operator=(SubwordTagModel&&) noexcept = default;

  Arch arch() const { return Arch::kSubword; }
  const ModelConfig& config() const { return config_; }
  ad::ParameterSet<T>& parameters() { return params_; }
  const ad::ParameterSet<T>& parameters() const { return params_; }
  std::size_t num_labels() const { return bio2_label_count(*word_vocab_); }
  const Vocabulary& word_vocab() const { return *word_vocab_; }
  ad::TransformerEncoder<T>& encoder() { return encoder_; }

  std::size_t input_length(const EncodedSentence& s) const { return s.subword_ids.size(); }
  std::size_t max_input_length() const { return config_.subword.max_seq_len; }

  // [sum of subword counts, 2 * |regular words|]
  ad::Tensor<T> logits(const std::vector<const EncodedSentence*>& batch, const ad::ForwardContext& ctx) const {
    if (batch.empty()) fail(ErrorCode::kInvalidArgument, "empty batch");
    std::vector<const std::vector<SymbolId>*> seqs;
    for (const auto* s : batch) seqs.push_back(&s->subword_ids);
    const auto packed = ad::SequenceBatch::pack(as_id_seqs(seqs), subword_->vocab().pad_id());
    auto out = encoder_.forward(packed, ctx);
    std::vector<std::size_t> rows;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      for (std::size_t k = 0; k < packed.lengths[b]; ++k) rows.push_back(b * packed.len + k);
    }
    return ad::linear(ad::gather_rows(out, std::span<const std::size_t>(rows)), out_w_, out_b_);
  }

  // Averaged over subword positions.
  ad::Tensor<T> loss(const std::vector<const TrainingExample*>& batch, const ad::ForwardContext& ctx) const {
    std::vector<const EncodedSentence*> inputs;
    std::vector<std::int32_t> labels;
    for (const auto* ex : batch) {
      inputs.push_back(&ex->input);
      for (auto g : ex->gold) word_label(g, *word_vocab_);  // validates
      for (const auto& tag : bio2_labels(ex->input.word_spans, ex->gold)) {
        labels.push_back(static_cast<std::int32_t>(bio2_label_index(tag, *word_vocab_)));
      }
    }
    return ad::cross_entropy(logits(inputs, ctx), std::span<const std::int32_t>(labels));
  }

  std::vector<Bio2Tag> predict_tags(const EncodedSentence& s) const {
    ad::NoGradGuard guard;
    std::vector<Bio2Tag> tags;
    for (auto label : argmax_rows(logits({&s}, {}))) tags.push_back(bio2_tag_from_label(label, *word_vocab_));
    return tags;
  }

  std::vector<std::vector<SymbolId>> predict(const std::vector<const EncodedSentence*>& batch,
                                             Bio2DecodeStats* stats = nullptr) const {
    ad::NoGradGuard guard;
    const auto best = argmax_rows(logits(batch, {}));
    std::vector<std::vector<SymbolId>> out;
    std::size_t r = 0;
    for (const auto* s : batch) {
      std::vector<Bio2Tag> tags;
      for (std::size_t i = 0; i < s->subword_ids.size(); ++i) tags.push_back(bio2_tag_from_label(best[r++], *word_vocab_));
      out.push_back(bio2_decode(tags, s->word_spans, stats));
    }
    return out;
  }

 private:
  ModelConfig config_;
  const Vocabulary* word_vocab_;
  const SubwordModel* subword_;
  ad::TransformerEncoder<T> encoder_;
  ad::ParameterSet<T> params_;
  ad::Tensor<T> out_w_, out_b_;
};

}  // namespace spellforge
