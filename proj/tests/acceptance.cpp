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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any failed.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spellforge/autodiff/gradcheck.hpp"
#include "spellforge/experiment.hpp"
#include "spellforge/keyboard.hpp"
#include "spellforge/toy.hpp"

namespace sf = spellforge;
namespace ad = spellforge::ad;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// F0.5 from precision and recall, written out independently of the library.
double f_half(double p, double r) { return 1.25 * p * r / (0.25 * p + r); }

// ---------------------------------------------------------------------------

Outcome published_main_table() {
  struct Row {
    double p, r, f;
  };
  // (dev P, R, F), (test P, R, F) for each of the eleven systems
  const std::array<std::array<Row, 2>, 11> rows = {{
      {{{0.823, 0.890, 0.836}, {0.755, 0.865, 0.775}}},
      {{{0.829, 0.952, 0.851}, {0.751, 0.928, 0.781}}},
      {{{0.517, 0.819, 0.559}, {0.458, 0.802, 0.501}}},
      {{{0.565, 0.949, 0.615}, {0.521, 0.903, 0.570}}},
      {{{0.959, 0.959, 0.959}, {0.882, 0.929, 0.891}}},
      {{{0.953, 0.947, 0.951}, {0.898, 0.927, 0.904}}},
      {{{0.934, 0.972, 0.941}, {0.831, 0.950, 0.852}}},
      {{{0.908, 0.959, 0.917}, {0.808, 0.939, 0.831}}},
      {{{0.931, 0.966, 0.938}, {0.866, 0.950, 0.881}}},
      {{{0.951, 0.982, 0.957}, {0.866, 0.962, 0.883}}},
      {{{0.946, 0.979, 0.952}, {0.896, 0.964, 0.909}}},
  }};
  double worst = 0;
  bool ok = true;
  for (const auto& row : rows) {
    for (const auto& c : row) {
      const double lib = sf::f_beta_score(c.p, c.r, 0.5);
      const double err = std::abs(lib - c.f);
      worst = std::max(worst, err);
      ok = ok && err <= 0.001 && std::abs(lib - f_half(c.p, c.r)) < 1e-12;
    }
  }
  return {ok, fmt("22 cells, max |F - published| = %.4f", worst)};
}

Outcome published_category_row() {
  const double f = sf::f_beta_score(0.916, 0.889, 0.5);
  return {std::abs(f - 0.911) <= 0.001, fmt("F0.5(0.916, 0.889) = %.4f", f)};
}

// ---------------------------------------------------------------------------

struct Tiny {
  sf::ToyData toy;
  sf::Vocabulary words, chars;
  sf::SubwordModel subword;
  sf::KeyboardAdjacency keyboard = sf::KeyboardAdjacency::qwerty();
  std::vector<sf::ParallelExample> data;

  sf::TokenizerResources res() const { return {&words, &chars, &subword, sf::kDefaultMaxWordLen}; }
};

std::unique_ptr<Tiny> make_corrupted_toy(const sf::ToyConfig& tc, std::size_t subword_size, std::uint64_t noise_seed) {
  auto t = std::make_unique<Tiny>();
  t->toy = sf::make_toy(tc);
  t->words = sf::Vocabulary(sf::VocabKind::kWord, t->toy.words);
  t->chars = sf::derive_char_vocab(t->words);
  t->subword = sf::train_subword(t->toy.sentences, subword_size);
  const sf::NoiseResources nr{&t->toy.lexicon, &t->words, &t->chars, &t->keyboard};
  sf::CorruptionConfig cc;
  cc.seed = noise_seed;
  t->data = sf::corrupt_dataset(t->toy.sentences, nr, cc);
  return t;
}

Outcome gradcheck_all_architectures() {
  const auto t0 = Clock::now();
  sf::ToyConfig tc;
  tc.vocab_size = 40;
  tc.num_sentences = 20;
  tc.max_len = 6;
  auto tiny = make_corrupted_toy(tc, 60, 2);
  std::vector<const sf::ParallelExample*> picked = {&tiny->data[0], &tiny->data[1]};
  std::string detail;
  bool ok = true;
  double worst = 0;
  for (std::size_t layers : {1, 2}) {
    auto cfg = sf::ModelConfig::desk();
    for (auto* e : {&cfg.word, &cfg.chars, &cfg.subword}) {
      e->hidden_size = 16;
      e->num_layers = layers;
      e->num_heads = 2;
    }
    // A wider init keeps attention gradients well above finite-difference noise.
    cfg.init_std = 0.3;
    detail += fmt("%zu layer(s): ", layers);
    for (auto arch : sf::kAllArchs) {
      auto any = sf::build_model<double>(arch, cfg, tiny->res(), 3);
      std::visit(
          [&](auto& m) {
            const std::vector<sf::ParallelExample> data{*picked[0], *picked[1]};
            const auto set = sf::prepare_examples(m, data, tiny->res());
            std::vector<const sf::TrainingExample*> batch;
            for (const auto& ex : set.examples) batch.push_back(&ex);
            ad::GradCheckOptions opts;
            opts.min_samples = 400;
            // Central differences at h = 1e-4 carry ~1e-11 of roundoff, so
            // gradients below 1e-6 are compared in absolute terms.
            opts.step = 1e-4;
            opts.floor = 1e-6;
            const auto r = ad::finite_difference_check<double>(m.parameters(), [&] { return m.loss(batch, {}); }, opts);
            ok = ok && r.passed && batch.size() == 2;
            worst = std::max(worst, r.max_rel_error);
            detail += fmt("%s %.1e, ", std::string(sf::to_string(arch)).c_str(), r.max_rel_error);
          },
          any);
    }
  }
  const double secs = seconds_since(t0);
  ok = ok && worst < 1e-4 && secs < 300;
  return {ok, detail + fmt("max %.1e in %.0fs", worst, secs)};
}

// ---------------------------------------------------------------------------

Outcome overfit_small_vocabulary() {
  const auto t0 = Clock::now();
  sf::ToyConfig tc;
  tc.vocab_size = 500;
  tc.num_sentences = 200;
  tc.seed = 7;
  auto tiny = make_corrupted_toy(tc, 200, 3);
  auto cfg = sf::ModelConfig::desk();
  for (auto* e : {&cfg.word, &cfg.chars, &cfg.subword}) {
    e->hidden_size = 128;
    e->num_layers = 2;
    e->num_heads = 4;
  }
  std::string detail = fmt("%zu sentences, %zu words: ", tiny->data.size(), tiny->words.num_regular());
  bool ok = true;
  for (auto arch : {sf::Arch::kWordChar, sf::Arch::kSubword}) {
    auto any = sf::build_model<float>(arch, cfg, tiny->res(), 11);
    std::visit(
        [&](auto& m) {
          const auto set = sf::prepare_examples(m, tiny->data, tiny->res());
          sf::TrainSchedule s;
          s.epochs = 300;
          s.learning_rate = 1e-3;
          s.batch_size = 16;
          s.stop_at_train_accuracy = 0.99;
          const auto r = sf::train_model(m, set, nullptr, s);
          const double acc = sf::word_accuracy(m, set);
          ok = ok && set.examples.size() == 200 && acc >= 0.99 && r.reached_target_epoch.has_value();
          detail += fmt("%s acc %.4f at epoch %zu; ", std::string(sf::to_string(arch)).c_str(), acc,
                        r.reached_target_epoch.value_or(0) + 1);
        },
        any);
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 1800;
  return {ok, detail + fmt("%.0fs", secs)};
}

// ---------------------------------------------------------------------------

Outcome nonword_detection() {
  sf::ToyConfig tc;
  tc.num_sentences = 1500;
  tc.seed = 21;
  auto tiny = make_corrupted_toy(tc, 100, 4);
  const std::vector<sf::ParallelExample> train(tiny->data.begin(), tiny->data.begin() + 500);
  const std::vector<sf::ParallelExample> test(tiny->data.begin() + 500, tiny->data.end());
  auto cfg = sf::ModelConfig::desk();
  for (auto* e : {&cfg.word, &cfg.chars}) e->hidden_size = 64;
  sf::WordCharModel<float> m(sf::Arch::kWordChar, cfg, tiny->res(), 5);
  const auto train_set = sf::prepare_examples(m, train, tiny->res());
  const auto test_set = sf::prepare_examples(m, test, tiny->res());
  sf::TrainSchedule s;
  s.epochs = 2;
  s.learning_rate = 1e-3;
  sf::train_model(m, train_set, nullptr, s);
  const auto r = sf::evaluate(m, test_set);
  const bool ok = test_set.examples.size() == 1000 && r.non_word_counts.positions > 0 &&
                  r.non_word_counts.detected == r.non_word_counts.positions;
  return {ok, fmt("%zu sentences, %llu non-word positions, detection recall %.3f", test_set.examples.size(),
                  static_cast<unsigned long long>(r.non_word_counts.positions), r.non_word.detection_recall)};
}

// ---------------------------------------------------------------------------

struct AblationSettings {
  std::size_t train_sentences = 1500;
  std::size_t epochs = 10;
  std::size_t hidden = 64;
};

// Test draws from the full lexicon, so a fifth of its pairs never occur in
// training. The toy context is close to deterministic so that real-word
// errors are learnable from 1.5k sentences.
Outcome ablation_trend(const AblationSettings& a) {
  const auto t0 = Clock::now();
  auto tc = sf::ToyConfig::contextual();
  tc.seed = 5;
  tc.num_sentences = a.train_sentences + 1300;
  const auto toy = sf::make_toy(tc);
  sf::SplitSpec sp;
  sp.seed = 2;
  sp.dev_size = 300;
  sp.test_size = 1000;
  sf::ExperimentConfig ec;
  ec.known_fraction = 0.8;
  for (auto* e : {&ec.model.word, &ec.model.chars, &ec.model.subword}) {
    e->hidden_size = a.hidden;
    e->num_layers = 2;
    e->num_heads = 4;
  }
  ec.schedule.epochs = a.epochs;
  ec.schedule.learning_rate = 1e-3;
  ec.schedule.batch_size = 16;
  const auto d = sf::prepare_experiment(sf::split_corpus(toy.sentences, sp), sf::Vocabulary(sf::VocabKind::kWord, toy.words),
                                        toy.lexicon, sf::KeyboardAdjacency::qwerty(), ec, false, true);

  std::map<std::string, std::vector<double>> f, real_f;
  for (const std::string arm : {"word", "char", "wordchar", "char+randchar", "wordchar+randchar"}) {
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto r = sf::run_arm(*d, sf::parse_arm(arm), ec, seed);
      f[arm].push_back(r.test.overall.f_beta);
      real_f[arm].push_back(r.test.real_word.f_beta);
    }
  }
  auto med = [](std::vector<double> v) { return sf::median(v); };
  const double fw = med(f["word"]), fc = med(f["char"]), fwc = med(f["wordchar"]);
  const double fcr = med(f["char+randchar"]), fwcr = med(f["wordchar+randchar"]);
  const double rw = med(real_f["word"]), rc = med(real_f["char"]), rwc = med(real_f["wordchar"]);
  const bool joint_best = fwc >= fw && fwc >= fc;
  const bool char_real_lowest = rc <= rw && rc <= rwc && rc < std::max(rw, rwc);
  const bool randchar_helps = fcr >= fc && fwcr >= fwc;
  const double secs = seconds_since(t0);
  return {joint_best && char_real_lowest && randchar_helps,
          fmt("F0.5 word %.3f char %.3f wordchar %.3f | real-word F0.5 word %.3f char %.3f wordchar %.3f | "
              "char+randchar %.3f wordchar+randchar %.3f | %.0fs",
              fw, fc, fwc, rw, rc, rwc, fcr, fwcr, secs)};
}

// ---------------------------------------------------------------------------

Outcome dataset_invariants() {
  sf::Rng rng(17);
  std::size_t bad_draws = 0;
  for (std::size_t i = 0; i < 1000000; ++i) {
    const std::size_t n = 1 + i % 200;
    const auto m = sf::sample_replacement_count(n, 0.2, rng);
    bad_draws += m < 1 || m > n;
  }
  sf::ToyConfig tc;
  tc.num_sentences = 2000;
  tc.seed = 9;
  const auto toy = sf::make_toy(tc);
  const sf::Vocabulary words(sf::VocabKind::kWord, toy.words);
  const auto chars = sf::derive_char_vocab(words);
  const auto kb = sf::KeyboardAdjacency::qwerty();
  const sf::NoiseResources nr{&toy.lexicon, &words, &chars, &kb};
  sf::CorruptionConfig cc;
  cc.seed = 12;
  cc.synthetic_fraction = 0.5;
  auto render = [&] {
    std::ostringstream os;
    sf::write_dataset(os, sf::corrupt_dataset(toy.sentences, nr, cc));
    return os.str();
  };
  const auto data = sf::corrupt_dataset(toy.sentences, nr, cc);
  std::size_t violations = 0;
  for (const auto& ex : data) violations += sf::check_invariants(ex).has_value();
  const bool identical = render() == render();
  return {bad_draws == 0 && violations == 0 && identical && data.size() == toy.sentences.size(),
          fmt("1e6 draws out of range: %zu; %zu examples, %zu invariant violations; regeneration %s", bad_draws,
              data.size(), violations, identical ? "byte-identical" : "differs")};
}

// ---------------------------------------------------------------------------

Outcome bio2_round_trip() {
  sf::ToyConfig tc;
  tc.vocab_size = 300;
  tc.num_sentences = 300;
  tc.seed = 13;
  auto tiny = make_corrupted_toy(tc, 150, 1);
  sf::Rng rng(23);
  const std::size_t cases = 10000;
  std::size_t failures = 0;
  for (std::size_t c = 0; c < cases; ++c) {
    // random noisy words, some out of vocabulary, and random gold words
    const std::size_t n = 1 + rng.uniform_index(12);
    std::vector<std::string> noisy;
    std::vector<sf::SymbolId> gold;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& w = tiny->toy.words[rng.uniform_index(tiny->toy.words.size())];
      noisy.push_back(rng.bernoulli(0.3) ? sf::detail::toy_edit(w, rng) : w);
      gold.push_back(static_cast<sf::SymbolId>(tiny->words.num_specials() + rng.uniform_index(tiny->words.num_regular())));
    }
    const auto [ids, spans] = sf::subword_encode(noisy, tiny->subword);
    const auto tags = sf::bio2_labels(spans, gold);
    std::vector<sf::Bio2Tag> via_labels;
    for (const auto& t : tags) {
      const auto label = sf::bio2_label_index(t, tiny->words);
      if (label >= sf::bio2_label_count(tiny->words)) ++failures;
      via_labels.push_back(sf::bio2_tag_from_label(label, tiny->words));
    }
    sf::Bio2DecodeStats stats;
    const auto back = sf::bio2_decode(via_labels, spans, &stats);
    bool ok = back == gold && tags.size() == ids.size() && stats.disagreements == 0 && stats.malformed_roles == 0;
    for (std::size_t k = 0; ok && k < spans.size(); ++k) {
      ok = spans[k].size() > 0 && (k == 0 ? spans[k].start == 0 : spans[k].start == spans[k - 1].end);
    }
    failures += !ok;
  }
  return {failures == 0, fmt("%zu cases, %zu failures", cases, failures)};
}

Outcome metric_brute_force() {
  // Tokens: single letters are in-vocabulary words, longer tokens are not.
  const std::vector<std::string> word_list = {"a", "b", "c", "d"};
  const sf::Vocabulary vocab(sf::VocabKind::kWord, word_list);
  const std::vector<std::string> pool = {"a", "b", "c", "d", "xx", "yy"};
  sf::Rng rng(29);
  const std::size_t cases = 10000;
  std::size_t failures = 0;
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t n = 1 + rng.uniform_index(30);
    std::vector<std::array<std::string, 3>> rows;  // noisy, predicted, gold
    for (std::size_t i = 0; i < n; ++i) {
      const auto& gold = word_list[rng.uniform_index(word_list.size())];
      const auto& noisy = rng.bernoulli(0.5) ? gold : pool[rng.uniform_index(pool.size())];
      const auto& pred = rng.bernoulli(0.5) ? gold : pool[rng.uniform_index(pool.size())];
      rows.push_back({noisy, pred, gold});
    }
    // Brute force straight from the outcome definitions.
    double tp = 0, fp = 0, fn = 0, tn = 0, rw_pos = 0, rw_det = 0, rw_cor = 0, nw_pos = 0, nw_det = 0;
    for (const auto& [noisy, pred, gold] : rows) {
      const bool corrupted = noisy != gold, right = pred == gold;
      if (corrupted && right) ++tp;
      if (!corrupted && !right) ++fp;
      if (corrupted && !right) ++fn;
      if (!corrupted && right) ++tn;
      if (corrupted) {
        const bool real = noisy.size() == 1;
        (real ? rw_pos : nw_pos) += 1;
        if (pred != noisy) (real ? rw_det : nw_det) += 1;
        if (real && right) ++rw_cor;
      }
    }
    const double p = tp + fp > 0 ? tp / (tp + fp) : 0, r = tp + fn > 0 ? tp / (tp + fn) : 0;
    const double fb = p + r > 0 ? f_half(p, r) : 0;
    const double acc = (tp + tn) / static_cast<double>(n);
    // Streaming, split across two shards and merged.
    sf::MetricsAccumulator left(&vocab), right(&vocab);
    const std::size_t cut = rng.uniform_index(n + 1);
    for (std::size_t i = 0; i < n; ++i) (i < cut ? left : right).add(rows[i][0], rows[i][1], rows[i][2]);
    right.merge(left);
    const auto rep = right.report();
    auto near = [](double x, double y) { return std::abs(x - y) < 1e-12; };
    bool ok = rep.counts.tp == tp && rep.counts.fp == fp && rep.counts.fn == fn && rep.counts.tn == tn &&
              near(rep.overall.precision, p) && near(rep.overall.recall, r) && near(rep.overall.f_beta, fb) &&
              near(rep.overall.accuracy, acc);
    ok = ok && rep.real_word_counts.positions == rw_pos && rep.real_word_counts.detected == rw_det &&
         rep.real_word_counts.corrected == rw_cor && rep.non_word_counts.positions == nw_pos &&
         rep.non_word_counts.detected == nw_det;
    if (nw_pos > 0) ok = ok && near(rep.non_word.detection_recall, nw_det / nw_pos);
    if (rw_det > 0) ok = ok && near(rep.real_word.correction_precision, rw_cor / rw_det);
    failures += !ok;
  }
  return {failures == 0, fmt("%zu cases, %zu mismatches", cases, failures)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spellforge acceptance checks"};
  std::vector<int> only;
  AblationSettings ablation;
  app.add_option("--only", only, "run only these criteria (1-8)");
  app.add_option("--ablation-train", ablation.train_sentences, "training sentences for the ablation");
  app.add_option("--ablation-epochs", ablation.epochs, "epochs per ablation arm");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"published F0.5 recomputed from P/R for every main-table row", published_main_table},
      {"published category row F0.5 from P/R", published_category_row},
      {"finite-difference gradcheck on every architecture (f64)", gradcheck_all_architectures},
      {"wordchar and subword overfit a 200-sentence, 500-word corpus", overfit_small_vocabulary},
      {"wordchar non-word detection recall on a 1k-sentence toy test set", nonword_detection},
      {"ablation trend over 3 seeds", [&] { return ablation_trend(ablation); }},
      {"dataset invariants and deterministic regeneration", dataset_invariants},
      {"BIO2 round trip and metric brute-force equivalence", [] {
         const auto a = bio2_round_trip(), b = metric_brute_force();
         return Outcome{a.pass && b.pass, "BIO2: " + a.detail + "; metrics: " + b.detail};
       }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[i].first << " :: " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
