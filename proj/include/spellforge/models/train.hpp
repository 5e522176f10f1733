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
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spellforge/autodiff/optim.hpp"
#include "spellforge/eval.hpp"
#include "spellforge/models/common.hpp"
#include "spellforge/models/subword_tag.hpp"
#include "spellforge/models/word_char.hpp"
#include "spellforge/noise.hpp"
#include "spellforge/rng.hpp"

namespace spellforge {

// ---------------------------------------------------------------------------
// Encoding datasets for a particular model

// Char sequences are cut to fit the char encoder ([CLS] + chars).
inline TokenizerResources fit_resources(TokenizerResources res, const ModelConfig& config, Arch arch) {
  if (uses_char_branch(arch)) res.max_word_len = std::min(res.max_word_len, config.chars.max_seq_len - 1);
  if (arch != Arch::kSubword) res.subword = nullptr;
  return res;
}

struct PreparedSet {
  std::vector<TrainingExample> examples;
  std::vector<const ParallelExample*> sources;  // parallel to examples
  std::size_t skipped_too_long = 0;
  std::size_t skipped_gold_oov = 0;
  std::size_t skipped_empty = 0;

  std::size_t skipped() const { return skipped_too_long + skipped_gold_oov + skipped_empty; }
};

template <typename Model>
PreparedSet prepare_examples(const Model& model, const std::vector<ParallelExample>& data,
                             const TokenizerResources& resources) {
  const auto res = fit_resources(resources, model.config(), model.arch());
  const auto& vocab = *res.word_vocab;
  PreparedSet out;
  for (const auto& ex : data) {
    if (ex.noisy.empty()) {
      ++out.skipped_empty;
      continue;
    }
    TrainingExample t;
    t.input = encode_sentence(ex.noisy, res);
    if (model.input_length(t.input) > model.max_input_length()) {
      ++out.skipped_too_long;
      continue;
    }
    bool ok = true;
    for (const auto& w : ex.clean.tokens) {
      auto id = vocab.find(w);
      if (!id || vocab.is_special(*id)) {
        ok = false;
        break;
      }
      t.gold.push_back(*id);
    }
    if (!ok) {
      ++out.skipped_gold_oov;
      continue;
    }
    out.examples.push_back(std::move(t));
    out.sources.push_back(&ex);
  }
  return out;
}

// The set keeps pointers into `data`, so temporaries are rejected.
template <typename Model>
PreparedSet prepare_examples(const Model&, const std::vector<ParallelExample>&&, const TokenizerResources&) = delete;

// ---------------------------------------------------------------------------
// Inference

template <typename Model>
std::vector<std::vector<SymbolId>> predict_examples(const Model& model, const PreparedSet& set,
                                                    Bio2DecodeStats* stats = nullptr, std::size_t batch_size = 32) {
  std::vector<std::vector<SymbolId>> out;
  out.reserve(set.examples.size());
  for (std::size_t i = 0; i < set.examples.size(); i += batch_size) {
    std::vector<const EncodedSentence*> batch;
    for (std::size_t j = i; j < std::min(set.examples.size(), i + batch_size); ++j) {
      batch.push_back(&set.examples[j].input);
    }
    for (auto& p : model.predict(batch, stats)) out.push_back(std::move(p));
  }
  return out;
}

template <typename Model>
MetricsReport evaluate(const Model& model, const PreparedSet& set, double beta = kDefaultBeta) {
  Bio2DecodeStats stats;
  const auto preds = predict_examples(model, set, &stats);
  const auto& vocab = model.word_vocab();
  MetricsAccumulator acc(&vocab);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& src = *set.sources[i];
    for (std::size_t k = 0; k < preds[i].size(); ++k) acc.add(src.noisy[k], vocab.symbol(preds[i][k]), src.clean.tokens[k]);
  }
  acc.count("skipped_sentences", set.skipped());
  if (model.arch() == Arch::kSubword) {
    acc.count("bio2_disagreements", stats.disagreements);
    acc.count("bio2_malformed_roles", stats.malformed_roles);
  }
  return acc.report(beta);
}

// Fraction of word positions where the prediction equals the gold word.
template <typename Model>
double word_accuracy(const Model& model, const PreparedSet& set) {
  const auto preds = predict_examples(model, set);
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t k = 0; k < preds[i].size(); ++k) {
      hit += preds[i][k] == set.examples[i].gold[k];
      ++total;
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

// Splits a long sentence into consecutive word windows whose encoded length
// fits the model, encodes each, and stitches the predictions back together.
template <typename Model>
std::vector<std::string> correct_sentence(std::span<const std::string> noisy, const Model& model,
                                          const TokenizerResources& resources) {
  std::vector<std::string> out;
  if (noisy.empty()) return out;
  const auto res = fit_resources(resources, model.config(), model.arch());
  const auto& vocab = model.word_vocab();
  const std::size_t limit = model.max_input_length();
  std::size_t start = 0;
  while (start < noisy.size()) {
    std::size_t end = start + 1;
    auto enc = encode_sentence(noisy.subspan(start, 1), res);
    if (model.input_length(enc) > limit) {
      // A single word that alone overflows: keep its leading pieces.
      enc.subword_ids.resize(limit);
      enc.word_spans[0].end = limit;
    } else {
      // Grow the window one word at a time while it still fits.
      while (end < noisy.size()) {
        auto bigger = encode_sentence(noisy.subspan(start, end + 1 - start), res);
        if (model.input_length(bigger) > limit) break;
        enc = std::move(bigger);
        ++end;
      }
    }
    const auto pred = model.predict({&enc});
    for (auto id : pred[0]) out.push_back(vocab.symbol(id));
    start = end;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainSchedule {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double learning_rate = ad::kDefaultLearningRate;
  std::uint64_t seed = 1;
  double beta = kDefaultBeta;
  // Stop as soon as eval-mode train word accuracy reaches this value.
  std::optional<double> stop_at_train_accuracy;
  bool track_train_accuracy = false;
  std::size_t bucket_factor = 8;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0;
  double learning_rate = 0;  // at the end of the epoch
  std::optional<MetricsReport> dev;
  std::optional<double> train_accuracy;
  double seconds = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::optional<std::size_t> best_epoch;  // by dev F-beta
  double best_dev_f = -1;
  bool diverged = false;
  std::optional<std::size_t> reached_target_epoch;
  std::uint64_t steps = 0;
  std::uint64_t skipped_steps = 0;
};

// Strictly greater wins, so the earliest epoch keeps a tie.
inline bool better_dev_score(double candidate, double incumbent) { return candidate > incumbent; }

// Length-bucketed minibatches: shuffle, sort pools of batch_size *
// bucket_factor by length, cut, then shuffle the batch order.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& lengths,
                                                          std::size_t batch_size, std::size_t bucket_factor,
                                                          Rng& rng) {
  if (batch_size == 0) fail(ErrorCode::kConfig, "batch_size must be positive");
  std::vector<std::size_t> order(lengths.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const std::size_t pool = batch_size * std::max<std::size_t>(bucket_factor, 1);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t p = 0; p < order.size(); p += pool) {
    auto first = order.begin() + static_cast<std::ptrdiff_t>(p);
    auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), p + pool));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
    for (auto it = first; it < last; it += static_cast<std::ptrdiff_t>(std::min<std::size_t>(batch_size, last - it))) {
      batches.emplace_back(it, it + static_cast<std::ptrdiff_t>(std::min<std::size_t>(batch_size, last - it)));
    }
  }
  rng.shuffle(batches);
  return batches;
}

template <typename T>
std::vector<std::vector<T>> snapshot(const ad::ParameterSet<T>& params) {
  std::vector<std::vector<T>> s;
  for (const auto& e : params.entries()) s.push_back(e.tensor.values());
  return s;
}

template <typename T>
void restore(ad::ParameterSet<T>& params, const std::vector<std::vector<T>>& s) {
  if (s.size() != params.size()) fail(ErrorCode::kShapeMismatch, "snapshot does not match parameters");
  for (std::size_t i = 0; i < s.size(); ++i) params.entries()[i].tensor.values() = s[i];
}

using EpochCallback = std::function<void(const EpochLog&)>;

/// Minibatch Adam with linear decay. With a dev set, the parameters that
/// scored the best dev F-beta are restored at the end; on a non-finite loss
/// training stops and the last good parameters are restored.
template <typename Model>
TrainResult train_model(Model& model, const PreparedSet& train, const PreparedSet* dev, const TrainSchedule& sched,
                        const EpochCallback& on_epoch = {}) {
  using T = typename std::decay_t<decltype(model.parameters().entries()[0].tensor)>::value_type;
  if (train.examples.empty()) fail(ErrorCode::kInsufficientData, "training set is empty");
  auto& params = model.parameters();
  std::vector<std::size_t> lengths;
  for (const auto& ex : train.examples) lengths.push_back(model.input_length(ex.input));
  const std::size_t per_epoch = (train.examples.size() + sched.batch_size - 1) / sched.batch_size;
  ad::AdamConfig ac;
  ac.base_lr = sched.learning_rate;
  ac.total_steps = std::max<std::uint64_t>(1, per_epoch * sched.epochs);
  ad::Adam<T> adam(params, ac);

  TrainResult result;
  auto last_good = snapshot(params);
  std::optional<std::vector<std::vector<T>>> best;
  for (std::size_t epoch = 0; epoch < sched.epochs && !result.diverged; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng batch_rng(stream_seed(sched.seed, 2 * epoch));
    Rng drop_rng(stream_seed(sched.seed, 2 * epoch + 1));
    const auto batches = make_batches(lengths, sched.batch_size, sched.bucket_factor, batch_rng);
    double loss_sum = 0;
    std::size_t loss_n = 0;
    for (const auto& b : batches) {
      std::vector<const TrainingExample*> batch;
      for (auto i : b) batch.push_back(&train.examples[i]);
      params.zero_grad();
      auto loss = model.loss(batch, ad::ForwardContext{true, &drop_rng});
      const double l = static_cast<double>(loss.item());
      if (!std::isfinite(l)) {
        result.diverged = true;
        break;
      }
      ad::backward(loss);
      adam.step(params);
      loss_sum += l;
      ++loss_n;
    }
    EpochLog log;
    log.epoch = epoch;
    log.mean_loss = loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0;
    log.learning_rate = adam.learning_rate();
    if (result.diverged) {
      restore(params, best ? *best : last_good);
      log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      result.log.push_back(log);
      if (on_epoch) on_epoch(result.log.back());
      break;
    }
    last_good = snapshot(params);
    if (dev && !dev->examples.empty()) {
      log.dev = evaluate(model, *dev, sched.beta);
      if (better_dev_score(log.dev->overall.f_beta, result.best_dev_f)) {
        result.best_dev_f = log.dev->overall.f_beta;
        result.best_epoch = epoch;
        best = last_good;
      }
    }
    if (sched.track_train_accuracy || sched.stop_at_train_accuracy) log.train_accuracy = word_accuracy(model, train);
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(log);
    if (on_epoch) on_epoch(result.log.back());
    if (sched.stop_at_train_accuracy && *log.train_accuracy >= *sched.stop_at_train_accuracy) {
      result.reached_target_epoch = epoch;
      break;
    }
  }
  if (best && !result.diverged) restore(params, *best);
  result.steps = adam.step_count();
  result.skipped_steps = adam.skipped_steps();
  return result;
}

}  // namespace spellforge
