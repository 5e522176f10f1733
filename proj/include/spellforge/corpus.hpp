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
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "spellforge/error.hpp"
#include "spellforge/rng.hpp"
#include "spellforge/utf8.hpp"
#include "spellforge/vocabulary.hpp"

namespace spellforge {

// Corpus-level defaults from the benchmark build.
inline constexpr std::size_t kDefaultWordVocabSize = 50000;
inline constexpr std::size_t kDefaultMaxSentLen = 200;
inline constexpr std::size_t kDefaultMaxWordLen = 20;
inline constexpr std::size_t kBenchmarkTrainSize = 17971548;
inline constexpr std::size_t kBenchmarkDevSize = 5985;
inline constexpr std::size_t kBenchmarkTestSize = 5862;

struct SentenceRecord {
  std::vector<std::string> tokens;
  std::string source_id;

  friend bool operator==(const SentenceRecord&, const SentenceRecord&) = default;
};

// Reads pre-tokenized text, one sentence per line. Blank lines are skipped;
// malformed UTF-8 is an error carrying the line number.
inline std::vector<SentenceRecord> read_sentences(std::istream& in, const std::string& name = "input") {
  std::vector<SentenceRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!utf8::is_valid(line)) {
      fail(ErrorCode::kParse, name + ":" + std::to_string(lineno) + ": invalid UTF-8");
    }
    auto tokens = utf8::split_whitespace(line);
    if (tokens.empty()) continue;
    out.push_back({std::move(tokens), name + ":" + std::to_string(lineno)});
  }
  return out;
}

inline std::vector<SentenceRecord> read_sentences_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open corpus " + path);
  return read_sentences(in, path);
}

inline void write_sentences(std::ostream& out, const std::vector<SentenceRecord>& sentences) {
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      if (i) out << ' ';
      out << s.tokens[i];
    }
    out << '\n';
  }
}

inline void write_sentences_file(const std::string& path, const std::vector<SentenceRecord>& sentences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path);
  write_sentences(out, sentences);
}

/// Word frequency table. Merging is associative and commutative, so shards
/// may be counted independently and combined in any order.
class WordCounts {
 public:
  void add(const SentenceRecord& s) {
    for (const auto& t : s.tokens) ++counts_[t];
  }
  void merge(const WordCounts& other) {
    for (const auto& [w, c] : other.counts_) counts_[w] += c;
  }
  const std::unordered_map<std::string, std::uint64_t>& counts() const { return counts_; }
  bool empty() const { return counts_.empty(); }

 private:
  std::unordered_map<std::string, std::uint64_t> counts_;
};

// Most frequent `max_size` words; ties go to the lexicographically smaller
// surface string. Specials are excluded from counting.
inline Vocabulary build_word_vocab(const WordCounts& counts, std::size_t max_size) {
  if (max_size < 1) fail(ErrorCode::kInvalidArgument, "max_size must be >= 1");
  if (counts.empty()) fail(ErrorCode::kInsufficientData, "cannot build a vocabulary from an empty stream");
  const auto specials = special_symbols(VocabKind::kWord);
  std::vector<std::pair<std::string, std::uint64_t>> items;
  items.reserve(counts.counts().size());
  for (const auto& [w, c] : counts.counts()) {
    if (std::find(specials.begin(), specials.end(), w) != specials.end()) continue;
    items.emplace_back(w, c);
  }
  if (items.empty()) fail(ErrorCode::kInsufficientData, "stream contains no regular words");
  const std::size_t keep = std::min(max_size, items.size());
  auto by_freq = [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  };
  std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(keep), items.end(), by_freq);
  std::vector<std::string> words;
  words.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) words.push_back(std::move(items[i].first));
  return Vocabulary(VocabKind::kWord, words);
}

inline Vocabulary build_word_vocab(const std::vector<SentenceRecord>& sentences, std::size_t max_size) {
  WordCounts counts;
  for (const auto& s : sentences) counts.add(s);
  return build_word_vocab(counts, max_size);
}

// Every code point that appears in some word entry, sorted by code point.
inline Vocabulary derive_char_vocab(const Vocabulary& word_vocab) {
  if (word_vocab.kind() != VocabKind::kWord) {
    fail(ErrorCode::kInvalidArgument, "derive_char_vocab needs a word vocabulary");
  }
  std::set<char32_t> chars;
  for (std::size_t i = word_vocab.num_specials(); i < word_vocab.size(); ++i) {
    for (char32_t cp : utf8::decode(word_vocab.entries()[i])) chars.insert(cp);
  }
  std::vector<std::string> symbols;
  symbols.reserve(chars.size());
  for (char32_t cp : chars) symbols.push_back(utf8::encode(cp));
  return Vocabulary(VocabKind::kChar, symbols);
}

struct FilterLimits {
  std::size_t max_sent_len = kDefaultMaxSentLen;
  std::size_t max_word_len = kDefaultMaxWordLen;
};

inline bool keep_sentence(const SentenceRecord& s, const Vocabulary& word_vocab, const FilterLimits& limits) {
  if (s.tokens.empty() || s.tokens.size() > limits.max_sent_len) return false;
  for (const auto& t : s.tokens) {
    if (!word_vocab.contains(t)) return false;
    if (utf8::length(t) > limits.max_word_len) return false;
  }
  return true;
}

// Drops sentences with OOV tokens, too many tokens, or over-long tokens.
inline std::vector<SentenceRecord> filter_sentences(const std::vector<SentenceRecord>& sentences,
                                                    const Vocabulary& word_vocab,
                                                    const FilterLimits& limits) {
  if (word_vocab.kind() != VocabKind::kWord) {
    fail(ErrorCode::kInvalidArgument, "filter_sentences needs a word vocabulary");
  }
  std::vector<SentenceRecord> out;
  for (const auto& s : sentences) {
    if (keep_sentence(s, word_vocab, limits)) out.push_back(s);
  }
  return out;
}

struct SplitSpec {
  std::uint64_t seed = 0;
  std::size_t dev_size = 0;
  std::size_t test_size = 0;
  // When unset, train receives every sentence not drawn for dev/test.
  std::optional<std::size_t> train_size;
};

struct CorpusSplits {
  std::vector<SentenceRecord> train;
  std::vector<SentenceRecord> dev;
  std::vector<SentenceRecord> test;
};

// Seeded random partition. Within each split the original corpus order is
// kept, so identical inputs give identical member sets and order.
inline CorpusSplits split_corpus(const std::vector<SentenceRecord>& sentences, const SplitSpec& spec) {
  const std::size_t held = spec.dev_size + spec.test_size;
  const std::size_t needed = held + spec.train_size.value_or(0);
  if (needed > sentences.size()) {
    fail(ErrorCode::kInsufficientData,
         "split needs " + std::to_string(needed) + " sentences but corpus has " +
             std::to_string(sentences.size()) + " (short by " + std::to_string(needed - sentences.size()) + ")");
  }
  std::vector<std::size_t> order(sentences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(spec.seed);
  rng.shuffle(order);

  enum Part : std::uint8_t { kNone, kTrain, kDev, kTest };
  std::vector<Part> part(sentences.size(), kNone);
  const std::size_t train_n = spec.train_size.value_or(sentences.size() - held);
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < spec.test_size) {
      part[order[i]] = kTest;
    } else if (i < held) {
      part[order[i]] = kDev;
    } else if (i < held + train_n) {
      part[order[i]] = kTrain;
    }
  }
  CorpusSplits out;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    switch (part[i]) {
      case kTrain: out.train.push_back(sentences[i]); break;
      case kDev: out.dev.push_back(sentences[i]); break;
      case kTest: out.test.push_back(sentences[i]); break;
      case kNone: break;
    }
  }
  return out;
}

}  // namespace spellforge
