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

#include <set>
#include <string>
#include <vector>

#include "spellforge/corpus.hpp"
#include "spellforge/error.hpp"
#include "spellforge/keyboard.hpp"
#include "spellforge/noise.hpp"
#include "spellforge/rng.hpp"

namespace spellforge {

/// Synthetic corpus for tests and demos. Words fall into categories; a
/// sentence walks a Markov chain over categories, and each word prefers a
/// fixed partner in the next category, so context says a lot about a word
/// without fully determining it. The lexicon holds non-word misspellings made
/// by single edits plus some real-word confusions across categories.
struct ToyConfig {
  std::size_t vocab_size = 500;
  std::size_t num_categories = 5;
  std::size_t num_sentences = 200;
  std::size_t min_len = 4;
  std::size_t max_len = 10;
  std::size_t min_word_len = 3;
  std::size_t max_word_len = 8;
  std::size_t nonword_per_word = 2;
  double real_word_fraction = 0.15;  // share of words that get a real-word confusion
  double partner_prob = 0.5;
  double next_category_prob = 0.8;  // else a uniformly random category
  // Substitutions and insertions use QWERTY neighbours instead of any letter.
  bool keyboard_edits = false;
  std::uint64_t seed = 1;

  // Strong context and a real-word confusion for every word, so that context
  // models have something to learn from a few thousand sentences.
  static ToyConfig contextual() {
    ToyConfig c;
    c.vocab_size = 200;
    c.real_word_fraction = 1.0;
    c.partner_prob = 0.9;
    c.next_category_prob = 0.95;
    c.keyboard_edits = true;
    return c;
  }
};

struct ToyData {
  std::vector<std::string> words;  // all vocabulary words
  std::vector<std::size_t> category;  // parallel to words
  std::vector<SentenceRecord> sentences;
  MisspellingLexicon lexicon;
};

namespace detail {

inline std::string toy_edit(const std::string& w, Rng& rng, const KeyboardAdjacency* keyboard = nullptr) {
  static constexpr std::string_view kLetters = "abcdefghijklmnopqrstuvwxyz";
  // a letter near `c` on the keyboard, or any letter
  auto near = [&](char c) {
    if (keyboard) {
      const auto nb = keyboard->neighbors(static_cast<unsigned char>(c));
      if (!nb.empty()) return static_cast<char>(nb[rng.uniform_index(nb.size())]);
    }
    return kLetters[rng.uniform_index(kLetters.size())];
  };
  std::string s = w;
  switch (rng.uniform_index(4)) {
    case 0:  // deletion
      if (s.size() > 2) s.erase(rng.uniform_index(s.size()), 1);
      break;
    case 1: {  // insertion
      const auto i = rng.uniform_index(s.size() + 1);
      const char c = near(s[std::min<std::size_t>(i, s.size() - 1)]);
      s.insert(s.begin() + static_cast<std::ptrdiff_t>(i), c);
      break;
    }
    case 2: {  // substitution
      const auto i = rng.uniform_index(s.size());
      s[i] = near(s[i]);
      break;
    }
    default:  // adjacent transposition
      if (s.size() >= 2) {
        const auto i = rng.uniform_index(s.size() - 1);
        std::swap(s[i], s[i + 1]);
      }
      break;
  }
  return s;
}

}  // namespace detail

inline ToyData make_toy(const ToyConfig& cfg) {
  if (cfg.vocab_size < cfg.num_categories || cfg.num_categories == 0) {
    fail(ErrorCode::kConfig, "toy vocabulary must hold at least one word per category");
  }
  if (cfg.min_len == 0 || cfg.min_len > cfg.max_len || cfg.min_word_len < 2 || cfg.min_word_len > cfg.max_word_len) {
    fail(ErrorCode::kConfig, "toy length bounds are inconsistent");
  }
  Rng rng(cfg.seed);
  const auto qwerty = KeyboardAdjacency::qwerty();
  const KeyboardAdjacency* keyboard = cfg.keyboard_edits ? &qwerty : nullptr;
  ToyData d;
  std::set<std::string> seen;
  while (d.words.size() < cfg.vocab_size) {
    const auto len = cfg.min_word_len + rng.uniform_index(cfg.max_word_len - cfg.min_word_len + 1);
    std::string w;
    for (std::size_t i = 0; i < len; ++i) w.push_back(static_cast<char>('a' + rng.uniform_index(26)));
    if (seen.insert(w).second) {
      d.category.push_back(d.words.size() % cfg.num_categories);
      d.words.push_back(std::move(w));
    }
  }
  std::vector<std::vector<std::size_t>> by_cat(cfg.num_categories);
  for (std::size_t i = 0; i < d.words.size(); ++i) by_cat[d.category[i]].push_back(i);
  // Partner of word i: a fixed word of the next category.
  std::vector<std::size_t> partner(d.words.size());
  for (std::size_t i = 0; i < d.words.size(); ++i) {
    const auto& next = by_cat[(d.category[i] + 1) % cfg.num_categories];
    partner[i] = next[rng.uniform_index(next.size())];
  }

  for (std::size_t s = 0; s < cfg.num_sentences; ++s) {
    SentenceRecord rec;
    rec.source_id = "toy:" + std::to_string(s);
    const auto len = cfg.min_len + rng.uniform_index(cfg.max_len - cfg.min_len + 1);
    std::size_t cat = rng.uniform_index(cfg.num_categories);
    std::size_t prev = by_cat[cat][rng.uniform_index(by_cat[cat].size())];
    rec.tokens.push_back(d.words[prev]);
    while (rec.tokens.size() < len) {
      cat = rng.bernoulli(cfg.next_category_prob) ? (cat + 1) % cfg.num_categories
                                                    : rng.uniform_index(cfg.num_categories);
      std::size_t next;
      if (d.category[partner[prev]] == cat && rng.bernoulli(cfg.partner_prob)) {
        next = partner[prev];
      } else {
        next = by_cat[cat][rng.uniform_index(by_cat[cat].size())];
      }
      rec.tokens.push_back(d.words[next]);
      prev = next;
    }
    d.sentences.push_back(std::move(rec));
  }

  for (std::size_t i = 0; i < d.words.size(); ++i) {
    const auto& w = d.words[i];
    std::size_t made = 0;
    for (std::size_t attempt = 0; made < cfg.nonword_per_word && attempt < 50; ++attempt) {
      auto m = detail::toy_edit(w, rng, keyboard);
      if (m.empty() || seen.contains(m)) continue;
      made += d.lexicon.add(w, m, Provenance::kNatural);
    }
    if (rng.bernoulli(cfg.real_word_fraction)) {
      const auto& other = by_cat[(d.category[i] + 2) % cfg.num_categories];
      const auto j = other[rng.uniform_index(other.size())];
      if (j != i) d.lexicon.add(w, d.words[j], Provenance::kNatural);
    }
  }
  return d;
}

}  // namespace spellforge
