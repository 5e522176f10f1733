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
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "spellforge/corpus.hpp"
#include "spellforge/error.hpp"
#include "spellforge/utf8.hpp"
#include "spellforge/vocabulary.hpp"

namespace spellforge {

inline constexpr std::string_view kContinuationMarker = "##";

// ---------------------------------------------------------------------------
// Word and character encoders

inline std::vector<SymbolId> word_encode(std::span<const std::string> noisy, const Vocabulary& word_vocab) {
  std::vector<SymbolId> ids;
  ids.reserve(noisy.size());
  const SymbolId unk = word_vocab.unk_id();
  for (const auto& w : noisy) {
    auto id = word_vocab.find(w);
    ids.push_back(id && !word_vocab.is_special(*id) ? *id : unk);
  }
  return ids;
}

// [CLS] followed by at most max_word_len character ids.
inline std::vector<SymbolId> char_encode(std::string_view word, const Vocabulary& char_vocab,
                                         std::size_t max_word_len) {
  const auto cps = utf8::decode(word);
  const std::size_t n = std::min(cps.size(), max_word_len);
  std::vector<SymbolId> ids;
  ids.reserve(n + 1);
  ids.push_back(char_vocab.special_id(kClsSymbol));
  const SymbolId unk = char_vocab.unk_id();
  for (std::size_t i = 0; i < n; ++i) {
    auto id = char_vocab.find(utf8::encode(cps[i]));
    ids.push_back(id && !char_vocab.is_special(*id) ? *id : unk);
  }
  return ids;
}

// ---------------------------------------------------------------------------
// Subword model (byte-pair merges over characters with a continuation marker)

struct WordSpan {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive

  std::size_t size() const { return end - start; }
  friend bool operator==(const WordSpan&, const WordSpan&) = default;
};

inline constexpr std::string_view kMergesHeader = "#spellforge-merges v1";

class SubwordModel {
 public:
  using Merge = std::pair<std::string, std::string>;

  SubwordModel() = default;

  SubwordModel(std::vector<Merge> merges, Vocabulary vocab) : merges_(std::move(merges)), vocab_(std::move(vocab)) {
    if (vocab_.kind() != VocabKind::kSubword) fail(ErrorCode::kInvalidArgument, "subword model needs a subword vocabulary");
    for (std::size_t i = 0; i < merges_.size(); ++i) {
      rank_.emplace(merges_[i].first + '\x01' + merges_[i].second, i);
    }
  }

  const std::vector<Merge>& merges() const { return merges_; }
  const Vocabulary& vocab() const { return vocab_; }

  // Surface pieces of one word, continuation pieces carrying the marker.
  // Characters outside the alphabet become the <unk> piece.
  std::vector<std::string> segment(std::string_view word) const {
    const auto cps = utf8::decode(word);
    std::vector<std::string> pieces;
    pieces.reserve(cps.size());
    for (std::size_t i = 0; i < cps.size(); ++i) {
      std::string p = i == 0 ? utf8::encode(cps[i]) : std::string(kContinuationMarker) + utf8::encode(cps[i]);
      pieces.push_back(vocab_.contains(p) ? std::move(p) : std::string(kUnkSymbol));
    }
    for (;;) {
      std::size_t best = merges_.size();
      std::size_t best_at = 0;
      for (std::size_t i = 0; i + 1 < pieces.size(); ++i) {
        auto it = rank_.find(pieces[i] + '\x01' + pieces[i + 1]);
        if (it != rank_.end() && it->second < best) {
          best = it->second;
          best_at = i;
        }
      }
      if (best == merges_.size()) break;
      pieces[best_at] = merged_symbol(pieces[best_at], pieces[best_at + 1]);
      pieces.erase(pieces.begin() + static_cast<std::ptrdiff_t>(best_at) + 1);
    }
    return pieces;
  }

  std::vector<SymbolId> encode_word(std::string_view word) const {
    std::vector<SymbolId> ids;
    const SymbolId unk = vocab_.unk_id();
    for (const auto& p : segment(word)) {
      auto id = vocab_.find(p);
      ids.push_back(id ? *id : unk);
    }
    return ids;
  }

  static std::string merged_symbol(std::string_view left, std::string_view right) {
    std::string out(left);
    if (right.starts_with(kContinuationMarker)) right.remove_prefix(kContinuationMarker.size());
    out += right;
    return out;
  }

  void save(const std::string& vocab_path, const std::string& merges_path) const {
    vocab_.save(vocab_path);
    std::ofstream out(merges_path, std::ios::binary);
    if (!out) fail(ErrorCode::kIo, "cannot write " + merges_path);
    out << kMergesHeader << '\n';
    for (const auto& [a, b] : merges_) out << a << ' ' << b << '\n';
  }

  static SubwordModel load(const std::string& vocab_path, const std::string& merges_path) {
    auto vocab = Vocabulary::load(vocab_path, VocabKind::kSubword);
    std::ifstream in(merges_path, std::ios::binary);
    if (!in) fail(ErrorCode::kIo, "cannot open " + merges_path);
    std::string line;
    if (!std::getline(in, line) || line != kMergesHeader) {
      fail(ErrorCode::kParse, merges_path + ": missing or unsupported version header");
    }
    std::vector<Merge> merges;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      auto fields = utf8::split_whitespace(line);
      if (fields.size() != 2) fail(ErrorCode::kParse, merges_path + ":" + std::to_string(lineno) + ": expected a pair");
      merges.emplace_back(std::move(fields[0]), std::move(fields[1]));
    }
    return SubwordModel(std::move(merges), std::move(vocab));
  }

 private:
  std::vector<Merge> merges_;
  Vocabulary vocab_;
  std::unordered_map<std::string, std::size_t> rank_;
};

// Greedy pair merging from the character alphabet. `target_vocab_size`
// counts regular symbols (specials excluded); merging stops early when no
// adjacent pair is left. Ties go to the lexicographically smallest pair.
inline SubwordModel train_subword(const std::vector<SentenceRecord>& corpus, std::size_t target_vocab_size) {
  if (corpus.empty()) fail(ErrorCode::kInsufficientData, "cannot train a subword model on an empty corpus");
  std::map<std::string, std::uint64_t> freq;
  for (const auto& s : corpus) {
    for (const auto& t : s.tokens) ++freq[t];
  }
  std::vector<std::vector<std::string>> words;
  std::vector<std::uint64_t> counts;
  std::set<std::string> alphabet;
  for (const auto& [w, c] : freq) {
    const auto cps = utf8::decode(w);
    std::vector<std::string> pieces;
    for (std::size_t i = 0; i < cps.size(); ++i) {
      pieces.push_back(i == 0 ? utf8::encode(cps[i]) : std::string(kContinuationMarker) + utf8::encode(cps[i]));
      alphabet.insert(pieces.back());
    }
    words.push_back(std::move(pieces));
    counts.push_back(c);
  }
  if (target_vocab_size < alphabet.size()) {
    fail(ErrorCode::kInvalidArgument, "target vocabulary size " + std::to_string(target_vocab_size) +
                                          " is smaller than the alphabet (" + std::to_string(alphabet.size()) + ")");
  }
  std::vector<std::string> symbols(alphabet.begin(), alphabet.end());
  std::set<std::string> known(alphabet.begin(), alphabet.end());
  std::vector<SubwordModel::Merge> merges;

  while (known.size() < target_vocab_size) {
    std::map<std::pair<std::string, std::string>, std::uint64_t> pair_counts;
    for (std::size_t w = 0; w < words.size(); ++w) {
      const auto& p = words[w];
      for (std::size_t i = 0; i + 1 < p.size(); ++i) pair_counts[{p[i], p[i + 1]}] += counts[w];
    }
    if (pair_counts.empty()) break;
    // std::map iterates pairs in lexicographic order, so the first maximum wins ties
    auto best = pair_counts.begin();
    for (auto it = pair_counts.begin(); it != pair_counts.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const auto [left, right] = best->first;
    const auto merged = SubwordModel::merged_symbol(left, right);
    merges.emplace_back(left, right);
    if (known.insert(merged).second) symbols.push_back(merged);
    for (auto& p : words) {
      for (std::size_t i = 0; i + 1 < p.size();) {
        if (p[i] == left && p[i + 1] == right) {
          p[i] = merged;
          p.erase(p.begin() + static_cast<std::ptrdiff_t>(i) + 1);
        } else {
          ++i;
        }
      }
    }
  }
  return SubwordModel(std::move(merges), Vocabulary(VocabKind::kSubword, symbols));
}

// Each word is segmented on its own; spans map words to subword positions.
inline std::pair<std::vector<SymbolId>, std::vector<WordSpan>> subword_encode(std::span<const std::string> noisy,
                                                                              const SubwordModel& model) {
  std::vector<SymbolId> ids;
  std::vector<WordSpan> spans;
  spans.reserve(noisy.size());
  for (const auto& w : noisy) {
    const auto start = ids.size();
    for (auto id : model.encode_word(w)) ids.push_back(id);
    spans.push_back({start, ids.size()});
  }
  return {std::move(ids), std::move(spans)};
}

// ---------------------------------------------------------------------------
// BIO2 word tags over subwords

enum class Bio2Role : std::uint8_t { kBegin = 0, kInside = 1 };

struct Bio2Tag {
  Bio2Role role = Bio2Role::kBegin;
  SymbolId word_id = 0;

  friend bool operator==(const Bio2Tag&, const Bio2Tag&) = default;
};

// Label space: 2 * |regular words|; label 2k is B-word_k, 2k+1 is I-word_k.
inline std::size_t bio2_label_count(const Vocabulary& word_vocab) { return 2 * word_vocab.num_regular(); }

inline std::size_t bio2_label_index(const Bio2Tag& tag, const Vocabulary& word_vocab) {
  return 2 * (static_cast<std::size_t>(tag.word_id) - word_vocab.num_specials()) + static_cast<std::size_t>(tag.role);
}

inline Bio2Tag bio2_tag_from_label(std::size_t label, const Vocabulary& word_vocab) {
  return {static_cast<Bio2Role>(label % 2), static_cast<SymbolId>(label / 2 + word_vocab.num_specials())};
}

inline std::string to_string(const Bio2Tag& tag, const Vocabulary& word_vocab) {
  return (tag.role == Bio2Role::kBegin ? "B-" : "I-") + word_vocab.symbol(tag.word_id);
}

inline std::vector<Bio2Tag> bio2_labels(std::span<const WordSpan> spans, std::span<const SymbolId> gold_words) {
  if (spans.size() != gold_words.size()) {
    fail(ErrorCode::kInvalidArgument, "bio2_labels: " + std::to_string(spans.size()) + " spans but " +
                                          std::to_string(gold_words.size()) + " gold words");
  }
  std::vector<Bio2Tag> tags;
  for (std::size_t k = 0; k < spans.size(); ++k) {
    if (spans[k].size() == 0) fail(ErrorCode::kInvalidArgument, "bio2_labels: empty span");
    tags.push_back({Bio2Role::kBegin, gold_words[k]});
    for (std::size_t i = 1; i < spans[k].size(); ++i) tags.push_back({Bio2Role::kInside, gold_words[k]});
  }
  return tags;
}

struct Bio2DecodeStats {
  std::size_t disagreements = 0;   // words whose I tags name another word
  std::size_t malformed_roles = 0;  // I at a span start, or B inside a span

  Bio2DecodeStats& operator+=(const Bio2DecodeStats& o) {
    disagreements += o.disagreements;
    malformed_roles += o.malformed_roles;
    return *this;
  }
};

// The word predicted for span k is the word of the tag at the span's first
// subword, whatever its role.
inline std::vector<SymbolId> bio2_decode(std::span<const Bio2Tag> tags, std::span<const WordSpan> spans,
                                         Bio2DecodeStats* stats = nullptr) {
  std::vector<SymbolId> words;
  words.reserve(spans.size());
  Bio2DecodeStats local;
  for (const auto& span : spans) {
    if (span.end > tags.size() || span.size() == 0) fail(ErrorCode::kInvalidArgument, "bio2_decode: span out of range");
    const auto& head = tags[span.start];
    words.push_back(head.word_id);
    if (head.role != Bio2Role::kBegin) ++local.malformed_roles;
    bool disagrees = false;
    for (std::size_t i = span.start + 1; i < span.end; ++i) {
      if (tags[i].word_id != head.word_id) disagrees = true;
      if (tags[i].role != Bio2Role::kInside) ++local.malformed_roles;
    }
    if (disagrees) ++local.disagreements;
  }
  if (stats) *stats += local;
  return words;
}

// ---------------------------------------------------------------------------

struct EncodedSentence {
  std::vector<SymbolId> word_ids;
  std::vector<std::vector<SymbolId>> char_ids;
  std::vector<SymbolId> subword_ids;
  std::vector<WordSpan> word_spans;
};

struct TokenizerResources {
  const Vocabulary* word_vocab = nullptr;
  const Vocabulary* char_vocab = nullptr;
  const SubwordModel* subword = nullptr;  // optional
  std::size_t max_word_len = kDefaultMaxWordLen;
};

inline EncodedSentence encode_sentence(std::span<const std::string> noisy, const TokenizerResources& res) {
  EncodedSentence out;
  out.word_ids = word_encode(noisy, *res.word_vocab);
  out.char_ids.reserve(noisy.size());
  for (const auto& w : noisy) out.char_ids.push_back(char_encode(w, *res.char_vocab, res.max_word_len));
  if (res.subword) {
    std::tie(out.subword_ids, out.word_spans) = subword_encode(noisy, *res.subword);
  } else {
    for (std::size_t i = 0; i < noisy.size(); ++i) out.word_spans.push_back({i, i + 1});
  }
  return out;
}

}  // namespace spellforge
