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
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "spellforge/corpus.hpp"
#include "spellforge/eval.hpp"
#include "spellforge/keyboard.hpp"
#include "spellforge/models/checkpoint.hpp"
#include "spellforge/models/mlm.hpp"
#include "spellforge/models/train.hpp"
#include "spellforge/noise.hpp"
#include "spellforge/tokenize.hpp"

namespace spellforge {

// An ablation arm: an architecture plus the two training options.
struct ArmSpec {
  Arch arch = Arch::kWordChar;
  bool random_char = false;
  bool mlm = false;

  std::string name() const {
    std::string n(to_string(arch));
    if (random_char) n += "+randchar";
    if (mlm) n += "+mlm";
    return n;
  }
  friend bool operator==(const ArmSpec&, const ArmSpec&) = default;
};

inline ArmSpec parse_arm(std::string_view s) {
  ArmSpec a;
  std::size_t plus = s.find('+');
  a.arch = parse_arch(s.substr(0, plus));
  while (plus != std::string_view::npos) {
    s = s.substr(plus + 1);
    plus = s.find('+');
    const auto opt = s.substr(0, plus);
    if (opt == "randchar") {
      a.random_char = true;
    } else if (opt == "mlm") {
      a.mlm = true;
    } else {
      fail(ErrorCode::kConfig, "unknown arm option '" + std::string(opt) + "'");
    }
  }
  if (a.mlm && a.arch != Arch::kSubword) fail(ErrorCode::kConfig, "+mlm applies to the subword arch only");
  return a;
}

struct ExperimentConfig {
  double sigma = 0.2;
  double random_char_fraction = 0.5;  // synthetic share for +randchar arms
  double known_fraction = 0.8;
  std::uint64_t noise_seed = 1;
  std::size_t subword_vocab_size = 1000;
  std::size_t max_word_len = kDefaultMaxWordLen;
  ModelConfig model = ModelConfig::desk();
  TrainSchedule schedule;
  MlmConfig mlm;
  bool select_on_dev = true;
  // Corrupt the test split only with pairs never seen in training.
  bool test_heldout_only = false;
};

/// Everything the arms share. Heap-allocated so the resource pointers stay
/// valid.
struct ExperimentData {
  Vocabulary word_vocab, char_vocab;
  std::optional<SubwordModel> subword;
  KeyboardAdjacency keyboard;
  KnownSplit lexicons;
  CorpusSplits splits;
  std::vector<ParallelExample> train_natural, train_random, dev, test;

  TokenizerResources resources(std::size_t max_word_len) const {
    return {&word_vocab, &char_vocab, subword ? &*subword : nullptr, max_word_len};
  }
};

inline CorruptionConfig corruption_for(const ExperimentConfig& cfg, std::uint64_t stream, double synthetic) {
  CorruptionConfig c;
  c.sigma = cfg.sigma;
  c.synthetic_fraction = synthetic;
  c.seed = stream_seed(cfg.noise_seed, stream);
  c.max_word_len = cfg.max_word_len;
  return c;
}

// Train and dev draw from the known lexicon; test from the full one. Only
// the +randchar training set ever contains synthetic noise.
inline std::unique_ptr<ExperimentData> prepare_experiment(CorpusSplits splits, Vocabulary word_vocab,
                                                          const MisspellingLexicon& lexicon, KeyboardAdjacency keyboard,
                                                          const ExperimentConfig& cfg, bool need_subword,
                                                          bool need_random) {
  auto d = std::make_unique<ExperimentData>();
  d->word_vocab = std::move(word_vocab);
  d->char_vocab = derive_char_vocab(d->word_vocab);
  d->keyboard = std::move(keyboard);
  d->splits = std::move(splits);
  d->lexicons = split_known(lexicon, cfg.known_fraction, stream_seed(cfg.noise_seed, 100));
  if (need_subword) d->subword = train_subword(d->splits.train, cfg.subword_vocab_size);
  const NoiseResources known{&d->lexicons.known, &d->word_vocab, &d->char_vocab, &d->keyboard};
  const auto* test_lex = cfg.test_heldout_only ? &d->lexicons.heldout : &d->lexicons.full;
  const NoiseResources full{test_lex, &d->word_vocab, &d->char_vocab, &d->keyboard};
  d->train_natural = corrupt_dataset(d->splits.train, known, corruption_for(cfg, 0, 0.0));
  if (need_random) d->train_random = corrupt_dataset(d->splits.train, known, corruption_for(cfg, 0, cfg.random_char_fraction));
  d->dev = corrupt_dataset(d->splits.dev, known, corruption_for(cfg, 1, 0.0));
  d->test = corrupt_dataset(d->splits.test, full, corruption_for(cfg, 2, 0.0));
  return d;
}

struct ArmResult {
  std::string name;
  std::uint64_t seed = 0;
  MetricsReport dev, test;
  TrainResult training;
  std::optional<MlmResult> mlm;
};

template <typename T>
void initialize_from_mlm(SubwordTagModel<T>& model, const ExperimentData& d, const ExperimentConfig& cfg,
                         std::uint64_t seed, MlmResult* out) {
  std::vector<std::vector<SymbolId>> corpus;
  for (const auto& s : d.splits.train) corpus.push_back(subword_encode(s.tokens, *d.subword).first);
  auto mc = cfg.mlm;
  mc.seed = stream_seed(seed, 77);
  auto r = mlm_pretrain(model.encoder(), corpus, d.subword->vocab(), mc);
  if (out) *out = std::move(r);
}

template <typename T = float>
ArmResult run_arm(const ExperimentData& d, const ArmSpec& arm, const ExperimentConfig& cfg, std::uint64_t seed,
                  const EpochCallback& on_epoch = {}, std::string* checkpoint_bytes = nullptr) {
  const auto res = d.resources(cfg.max_word_len);
  auto any = build_model<T>(arm.arch, cfg.model, res, stream_seed(seed, 1));
  ArmResult out;
  out.name = arm.name();
  out.seed = seed;
  std::visit(
      [&](auto& model) {
        if constexpr (std::is_same_v<std::decay_t<decltype(model)>, SubwordTagModel<T>>) {
          if (arm.mlm) initialize_from_mlm(model, d, cfg, seed, &out.mlm.emplace());
        }
        const auto& train_data = arm.random_char ? d.train_random : d.train_natural;
        if (train_data.empty()) fail(ErrorCode::kInsufficientData, "arm " + out.name + " has no training data");
        const auto train = prepare_examples(model, train_data, res);
        const auto dev = prepare_examples(model, d.dev, res);
        const auto test = prepare_examples(model, d.test, res);
        auto sched = cfg.schedule;
        sched.seed = stream_seed(seed, 2);
        out.training = train_model(model, train, cfg.select_on_dev ? &dev : nullptr, sched, on_epoch);
        out.dev = evaluate(model, dev, sched.beta);
        out.test = evaluate(model, test, sched.beta);
        if (checkpoint_bytes) *checkpoint_bytes = serialize_checkpoint(model, res, out.training.steps);
      },
      any);
  return out;
}

// ---------------------------------------------------------------------------
// Comparison tables

struct ComparisonRow {
  std::string name;
  MetricsReport dev, test;
};

inline double median(std::vector<double> v) {
  if (v.empty()) fail(ErrorCode::kInvalidArgument, "median of nothing");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// First table: dev and test Acc/P/R/F per arm. Second table: the real-word
// and non-word breakdown on both splits.
inline void emit_comparison(const std::vector<ComparisonRow>& rows, ReportFormat format, std::ostream& out) {
  if (format == ReportFormat::kJson) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) j.push_back({{"arm", r.name}, {"dev", report_to_json(r.dev)}, {"test", report_to_json(r.test)}});
    out << j.dump(2) << '\n';
    return;
  }
  const bool csv = format == ReportFormat::kCsv;
  std::size_t width = 10;
  for (const auto& r : rows) width = std::max(width, r.name.size() + 2);
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (csv) {
        out << (i ? "," : "") << cells[i];
      } else {
        const std::size_t w = i ? 10 : width;
        out << cells[i];
        if (i + 1 < cells.size()) out << std::string(cells[i].size() < w ? w - cells[i].size() : 1, ' ');
      }
    }
    out << '\n';
  };
  auto f3 = [](double v) { return detail::fixed3(v); };
  auto cat = [&](const CategoryMetrics& m, double v) { return m.present ? f3(v) : std::string("-"); };

  line({"model", "dev_acc", "dev_p", "dev_r", "dev_f0.5", "test_acc", "test_p", "test_r", "test_f0.5"});
  for (const auto& r : rows) {
    std::vector<std::string> cells = {r.name};
    for (const auto* rep : {&r.dev, &r.test}) {
      cells.push_back(f3(rep->overall.accuracy));
      cells.push_back(f3(rep->overall.precision));
      cells.push_back(f3(rep->overall.recall));
      cells.push_back(f3(rep->overall.f_beta));
    }
    line(cells);
  }
  out << '\n';
  line({"model", "split", "real_p", "real_r", "real_f0.5", "nonword_p", "nonword_r"});
  for (const auto& r : rows) {
    for (const auto& [split, rep] : {std::pair{"dev", &r.dev}, std::pair{"test", &r.test}}) {
      line({r.name, split, cat(rep->real_word, rep->real_word.correction_precision),
            cat(rep->real_word, rep->real_word.detection_recall), cat(rep->real_word, rep->real_word.f_beta),
            cat(rep->non_word, rep->non_word.correction_precision), cat(rep->non_word, rep->non_word.detection_recall)});
    }
  }
}

}  // namespace spellforge
