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
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "spellforge/corpus.hpp"
#include "spellforge/error.hpp"
#include "spellforge/keyboard.hpp"
#include "spellforge/rng.hpp"
#include "spellforge/utf8.hpp"
#include "spellforge/vocabulary.hpp"

namespace spellforge {

// ---------------------------------------------------------------------------
// Misspelling lexicon

enum class Provenance { kNatural, kSynthetic };

struct LexiconEntry {
  std::string misspelling;
  Provenance provenance = Provenance::kNatural;
};

struct LexiconLoadStats {
  std::size_t pairs_read = 0;
  std::size_t skipped_identical = 0;
  std::size_t duplicates = 0;
};

/// Map from correct word to its known misspellings. Case-sensitive; a word
/// never lists itself; (word, misspelling) pairs are unique.
class MisspellingLexicon {
 public:
  // Returns false if the pair was rejected (identity) or already present.
  bool add(const std::string& word, const std::string& misspelling,
           Provenance provenance = Provenance::kNatural) {
    if (word == misspelling) return false;
    auto& list = entries_[word];
    for (const auto& e : list) {
      if (e.misspelling == misspelling) return false;
    }
    list.push_back({misspelling, provenance});
    ++num_pairs_;
    return true;
  }

  std::span<const LexiconEntry> lookup(const std::string& word) const {
    auto it = entries_.find(word);
    if (it == entries_.end()) return {};
    return it->second;
  }

  bool has(const std::string& word) const { return !lookup(word).empty(); }
  std::size_t num_pairs() const { return num_pairs_; }
  std::size_t num_words() const { return entries_.size(); }

  // All pairs, ordered by word then insertion order.
  std::vector<std::pair<std::string, LexiconEntry>> pairs() const {
    std::vector<std::pair<std::string, LexiconEntry>> out;
    out.reserve(num_pairs_);
    for (const auto& [w, list] : entries_) {
      for (const auto& e : list) out.emplace_back(w, e);
    }
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::kIo, "cannot write lexicon " + path);
    for (const auto& [w, list] : entries_) {
      for (const auto& e : list) out << w << '\t' << e.misspelling << '\n';
    }
  }

  friend bool operator==(const MisspellingLexicon& a, const MisspellingLexicon& b) {
    if (a.num_pairs_ != b.num_pairs_ || a.entries_.size() != b.entries_.size()) return false;
    for (const auto& [w, list] : a.entries_) {
      auto it = b.entries_.find(w);
      if (it == b.entries_.end() || it->second.size() != list.size()) return false;
      for (std::size_t i = 0; i < list.size(); ++i) {
        if (list[i].misspelling != it->second[i].misspelling) return false;
      }
    }
    return true;
  }

 private:
  std::map<std::string, std::vector<LexiconEntry>> entries_;
  std::size_t num_pairs_ = 0;
};

// Reads `correct<TAB>misspelling` lines into `lexicon`. Blank lines are
// ignored; any other line without exactly two non-empty fields is an error.
inline LexiconLoadStats load_lexicon_into(MisspellingLexicon& lexicon, std::istream& in,
                                          const std::string& name) {
  LexiconLoadStats stats;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos || tab == 0 ||
        tab + 1 == line.size()) {
      fail(ErrorCode::kParse, name + ":" + std::to_string(lineno) + ": expected correct<TAB>misspelling");
    }
    const std::string word = line.substr(0, tab);
    const std::string miss = line.substr(tab + 1);
    if (!utf8::is_valid(word) || !utf8::is_valid(miss)) {
      fail(ErrorCode::kParse, name + ":" + std::to_string(lineno) + ": invalid UTF-8");
    }
    ++stats.pairs_read;
    if (word == miss) {
      ++stats.skipped_identical;
      continue;
    }
    if (!lexicon.add(word, miss)) ++stats.duplicates;
  }
  return stats;
}

inline MisspellingLexicon load_lexicon(std::span<const std::string> paths, LexiconLoadStats* stats = nullptr) {
  MisspellingLexicon lexicon;
  LexiconLoadStats total;
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::kIo, "cannot open lexicon " + path);
    const auto s = load_lexicon_into(lexicon, in, path);
    total.pairs_read += s.pairs_read;
    total.skipped_identical += s.skipped_identical;
    total.duplicates += s.duplicates;
  }
  if (stats) *stats = total;
  return lexicon;
}

inline MisspellingLexicon load_lexicon(const std::string& path, LexiconLoadStats* stats = nullptr) {
  return load_lexicon(std::span<const std::string>(&path, 1), stats);
}

struct KnownSplit {
  MisspellingLexicon known;
  MisspellingLexicon full;
  MisspellingLexicon heldout;  // full minus known
};

// Samples floor(fraction * N) of the N (word, misspelling) pairs uniformly.
inline KnownSplit split_known(const MisspellingLexicon& lexicon, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    fail(ErrorCode::kInvalidArgument, "known fraction must lie in (0, 1]");
  }
  auto pairs = lexicon.pairs();
  const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(pairs.size())));
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<bool> chosen(pairs.size(), false);
  for (std::size_t i = 0; i < keep; ++i) chosen[order[i]] = true;
  KnownSplit out{{}, lexicon, {}};
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& dst = chosen[i] ? out.known : out.heldout;
    dst.add(pairs[i].first, pairs[i].second.misspelling, pairs[i].second.provenance);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic misspellings

enum class NoiseKind { kSwap, kMiddleRandom, kFullyRandom, kKeyboardTypo, kRandomGenerate };

inline constexpr std::array<NoiseKind, 5> kAllNoiseKinds = {
    NoiseKind::kSwap, NoiseKind::kMiddleRandom, NoiseKind::kFullyRandom, NoiseKind::kKeyboardTypo,
    NoiseKind::kRandomGenerate};

inline std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kSwap: return "Swap";
    case NoiseKind::kMiddleRandom: return "MiddleRandom";
    case NoiseKind::kFullyRandom: return "FullyRandom";
    case NoiseKind::kKeyboardTypo: return "KeyboardTypo";
    case NoiseKind::kRandomGenerate: return "RandomGenerate";
  }
  return "?";
}

// Where a corrupted token came from.
enum class NoiseSource { kNaturalLexicon, kSwap, kMiddleRandom, kFullyRandom, kKeyboardTypo, kRandomGenerate };

inline NoiseSource source_of(NoiseKind kind) {
  return static_cast<NoiseSource>(static_cast<int>(kind) + 1);
}

inline std::string_view to_string(NoiseSource source) {
  if (source == NoiseSource::kNaturalLexicon) return "NaturalLexicon";
  return to_string(static_cast<NoiseKind>(static_cast<int>(source) - 1));
}

inline NoiseSource parse_noise_source(std::string_view name) {
  if (name == "NaturalLexicon") return NoiseSource::kNaturalLexicon;
  for (auto k : kAllNoiseKinds) {
    if (to_string(k) == name) return source_of(k);
  }
  fail(ErrorCode::kParse, "unknown noise source " + std::string(name));
}

// Swap/MiddleRandom need an interior of at least two characters.
inline constexpr std::size_t kMinInteriorWordLen = 4;
inline constexpr int kKindRetryBudget = 8;

struct SynthResources {
  const Vocabulary* char_vocab = nullptr;
  const KeyboardAdjacency* keyboard = nullptr;
  std::size_t max_word_len = kDefaultMaxWordLen;
};

namespace detail {

inline bool has_two_distinct(std::u32string_view s) {
  return std::any_of(s.begin(), s.end(), [&](char32_t c) { return c != s.front(); });
}

// Shuffles [first, last) of `cps` until the word changes. Caller guarantees
// the range holds two distinct characters, so the loop terminates.
inline std::string permute_range(std::u32string cps, std::size_t first, std::size_t last, Rng& rng) {
  const std::u32string original = cps;
  do {
    for (std::size_t i = last - first; i > 1; --i) {
      const std::size_t j = rng.uniform_index(i);
      std::swap(cps[first + i - 1], cps[first + j]);
    }
  } while (cps == original);
  return utf8::encode(cps);
}

}  // namespace detail

// Replaces the character at `position` with `replacement`.
inline std::string keyboard_typo_at(std::string_view word, std::size_t position, char32_t replacement) {
  auto cps = utf8::decode(word);
  cps.at(position) = replacement;
  return utf8::encode(cps);
}

inline std::string random_generate(const SynthResources& res, Rng& rng) {
  const auto& vocab = *res.char_vocab;
  if (vocab.num_regular() == 0) fail(ErrorCode::kInvalidArgument, "character vocabulary is empty");
  const auto len = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(res.max_word_len)));
  std::string out;
  for (std::size_t i = 0; i < len; ++i) {
    out += vocab.symbol(static_cast<SymbolId>(vocab.num_specials() + rng.uniform_index(vocab.num_regular())));
  }
  return out;
}

// One attempt at `kind`. Returns nullopt when the word admits no differing
// output under that kind.
inline std::optional<std::string> try_synth(std::string_view word, NoiseKind kind, const SynthResources& res,
                                            Rng& rng) {
  const auto cps = utf8::decode(word);
  const std::size_t n = cps.size();
  switch (kind) {
    case NoiseKind::kSwap: {
      if (n < kMinInteriorWordLen) return std::nullopt;
      // adjacent interior pairs (i, i+1) with 1 <= i and i+1 <= n-2
      std::vector<std::size_t> candidates;
      for (std::size_t i = 1; i + 2 < n; ++i) {
        if (cps[i] != cps[i + 1]) candidates.push_back(i);
      }
      if (candidates.empty()) return std::nullopt;
      auto out = cps;
      const auto i = candidates[rng.uniform_index(candidates.size())];
      std::swap(out[i], out[i + 1]);
      return utf8::encode(out);
    }
    case NoiseKind::kMiddleRandom: {
      if (n < kMinInteriorWordLen) return std::nullopt;
      if (!detail::has_two_distinct(std::u32string_view(cps).substr(1, n - 2))) return std::nullopt;
      return detail::permute_range(cps, 1, n - 1, rng);
    }
    case NoiseKind::kFullyRandom: {
      if (n < 2 || !detail::has_two_distinct(cps)) return std::nullopt;
      return detail::permute_range(cps, 0, n, rng);
    }
    case NoiseKind::kKeyboardTypo: {
      if (!res.keyboard) return std::nullopt;
      std::vector<std::size_t> positions;
      for (std::size_t i = 0; i < n; ++i) {
        if (!res.keyboard->neighbors(cps[i]).empty()) positions.push_back(i);
      }
      if (positions.empty()) return std::nullopt;
      const auto pos = positions[rng.uniform_index(positions.size())];
      const auto nb = res.keyboard->neighbors(cps[pos]);
      auto out = cps;
      out[pos] = nb[rng.uniform_index(nb.size())];
      if (out == cps) return std::nullopt;
      return utf8::encode(out);
    }
    case NoiseKind::kRandomGenerate: {
      for (int attempt = 0; attempt < 64; ++attempt) {
        auto s = random_generate(res, rng);
        if (s != word) return s;
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

struct SynthResult {
  std::string text;
  NoiseKind kind;  // the kind that actually produced `text`
};

// Applies `kind`; if the word is ineligible, redraws a kind uniformly, and
// after kKindRetryBudget failed attempts falls back to RandomGenerate.
inline SynthResult synth_misspell(std::string_view word, NoiseKind kind, const SynthResources& res, Rng& rng) {
  if (word.empty()) fail(ErrorCode::kInvalidArgument, "synth_misspell needs a non-empty word");
  NoiseKind current = kind;
  for (int attempt = 0; attempt < kKindRetryBudget; ++attempt) {
    if (auto s = try_synth(word, current, res, rng)) return {*std::move(s), current};
    current = kAllNoiseKinds[rng.uniform_index(kAllNoiseKinds.size())];
  }
  if (auto s = try_synth(word, NoiseKind::kRandomGenerate, res, rng)) {
    return {*std::move(s), NoiseKind::kRandomGenerate};
  }
  fail(ErrorCode::kInvalidArgument, "no misspelling of \"" + std::string(word) + "\" can be generated");
}

// ---------------------------------------------------------------------------
// Sentence corruption

struct CorruptionConfig {
  double sigma = 0.2;
  double synthetic_fraction = 0.0;
  std::uint64_t seed = 0;
  std::size_t max_word_len = kDefaultMaxWordLen;

  void validate() const {
    if (!(sigma > 0.0)) fail(ErrorCode::kConfig, "sigma must be > 0");
    if (!(synthetic_fraction >= 0.0 && synthetic_fraction <= 1.0)) {
      fail(ErrorCode::kConfig, "synthetic_fraction must lie in [0, 1]");
    }
  }
};

// m = max(floor(alpha * n), 1)
inline std::size_t replacement_count(std::size_t n, double alpha) {
  const auto m = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(n)));
  return std::clamp<std::size_t>(m, 1, n);
}

// alpha = min(|N(0, sigma)|, 1)
inline double sample_alpha(double sigma, Rng& rng) { return std::min(std::abs(rng.normal(0.0, sigma)), 1.0); }

inline std::size_t sample_replacement_count(std::size_t n, double sigma, Rng& rng) {
  if (n < 1) fail(ErrorCode::kInvalidArgument, "sentence must have at least one token");
  return replacement_count(n, sample_alpha(sigma, rng));
}

struct Corruption {
  std::size_t position = 0;
  NoiseSource source = NoiseSource::kNaturalLexicon;

  friend bool operator==(const Corruption&, const Corruption&) = default;
};

struct ParallelExample {
  SentenceRecord clean;
  std::vector<std::string> noisy;
  std::vector<Corruption> corrupted;  // sorted by position

  friend bool operator==(const ParallelExample&, const ParallelExample&) = default;
};

// Returns a description of the first violated invariant, if any.
inline std::optional<std::string> check_invariants(const ParallelExample& ex) {
  if (ex.noisy.size() != ex.clean.tokens.size()) return "token count differs between clean and noisy";
  std::vector<bool> marked(ex.noisy.size(), false);
  for (const auto& c : ex.corrupted) {
    if (c.position >= ex.noisy.size()) return "corruption position out of range";
    if (marked[c.position]) return "position marked twice";
    marked[c.position] = true;
  }
  for (std::size_t i = 0; i < ex.noisy.size(); ++i) {
    const bool differs = ex.noisy[i] != ex.clean.tokens[i];
    if (differs != marked[i]) {
      return "position " + std::to_string(i) + (differs ? " differs but is unmarked" : " is marked but unchanged");
    }
  }
  return std::nullopt;
}

enum class MisspellingClass { kRealWord, kNonWord };

inline MisspellingClass classify_misspelling(std::string_view noisy_token, const Vocabulary& word_vocab) {
  return word_vocab.contains(noisy_token) ? MisspellingClass::kRealWord : MisspellingClass::kNonWord;
}

struct NoiseResources {
  const MisspellingLexicon* lexicon = nullptr;
  const Vocabulary* word_vocab = nullptr;
  const Vocabulary* char_vocab = nullptr;
  const KeyboardAdjacency* keyboard = nullptr;
};

struct CorruptionStats {
  std::size_t sentences = 0;
  std::size_t uncorrupted_sentences = 0;  // no corruptible position
  std::size_t short_sentences = 0;        // fewer than m positions corrupted
  std::size_t corrupted_positions = 0;
  std::size_t real_word_positions = 0;
  std::map<std::string, std::size_t> by_source;

  double real_word_fraction() const {
    return corrupted_positions ? static_cast<double>(real_word_positions) / static_cast<double>(corrupted_positions)
                               : 0.0;
  }

  void add(const ParallelExample& ex, std::size_t requested, const Vocabulary& word_vocab) {
    ++sentences;
    if (ex.corrupted.empty()) ++uncorrupted_sentences;
    if (ex.corrupted.size() < requested) ++short_sentences;
    for (const auto& c : ex.corrupted) {
      ++corrupted_positions;
      ++by_source[std::string(to_string(c.source))];
      if (classify_misspelling(ex.noisy[c.position], word_vocab) == MisspellingClass::kRealWord) {
        ++real_word_positions;
      }
    }
  }
};

// Corrupts m positions drawn uniformly without replacement. Each position
// takes a synthetic misspelling with probability synthetic_fraction, else a
// uniformly chosen lexicon entry. Positions that cannot be corrupted are
// skipped in favour of the next drawn position, so at most n positions are
// tried. `requested` receives m.
inline ParallelExample corrupt_sentence(const SentenceRecord& clean, const NoiseResources& res,
                                        const CorruptionConfig& config, Rng& rng,
                                        std::size_t* requested = nullptr) {
  const std::size_t n = clean.tokens.size();
  if (n == 0) fail(ErrorCode::kInvalidArgument, "cannot corrupt an empty sentence");
  const std::size_t m = sample_replacement_count(n, config.sigma, rng);
  if (requested) *requested = m;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);

  SynthResources synth{res.char_vocab, res.keyboard, config.max_word_len};
  ParallelExample ex{clean, clean.tokens, {}};
  for (std::size_t pos : order) {
    if (ex.corrupted.size() == m) break;
    const auto& word = clean.tokens[pos];
    const bool synthetic = config.synthetic_fraction > 0.0 && rng.bernoulli(config.synthetic_fraction);
    const auto entries = res.lexicon ? res.lexicon->lookup(word) : std::span<const LexiconEntry>{};
    if (!synthetic && !entries.empty()) {
      ex.noisy[pos] = entries[rng.uniform_index(entries.size())].misspelling;
      ex.corrupted.push_back({pos, NoiseSource::kNaturalLexicon});
    } else if (synthetic || config.synthetic_fraction > 0.0) {
      // synthetic draw, or a natural draw on a word the lexicon cannot cover
      // while synthetic noise is enabled
      const auto kind = kAllNoiseKinds[rng.uniform_index(kAllNoiseKinds.size())];
      auto r = synth_misspell(word, kind, synth, rng);
      ex.noisy[pos] = std::move(r.text);
      ex.corrupted.push_back({pos, source_of(r.kind)});
    }
  }
  std::sort(ex.corrupted.begin(), ex.corrupted.end(),
            [](const Corruption& a, const Corruption& b) { return a.position < b.position; });
  return ex;
}

// Each sentence draws from its own stream derived from (seed, index), so the
// output does not depend on how sentences are scheduled.
inline std::vector<ParallelExample> corrupt_dataset(const std::vector<SentenceRecord>& sentences,
                                                    const NoiseResources& res, const CorruptionConfig& config,
                                                    CorruptionStats* stats = nullptr) {
  config.validate();
  std::vector<ParallelExample> out;
  out.reserve(sentences.size());
  CorruptionStats local;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    Rng rng(stream_seed(config.seed, i));
    std::size_t requested = 0;
    out.push_back(corrupt_sentence(sentences[i], res, config, rng, &requested));
    local.add(out.back(), requested, *res.word_vocab);
  }
  if (stats) *stats = std::move(local);
  return out;
}

// ---------------------------------------------------------------------------
// JSON-lines dataset I/O

inline nlohmann::json to_json(const ParallelExample& ex) {
  nlohmann::json corrupted = nlohmann::json::array();
  for (const auto& c : ex.corrupted) {
    corrupted.push_back({{"position", c.position}, {"source", std::string(to_string(c.source))}});
  }
  return {{"clean", ex.clean.tokens}, {"noisy", ex.noisy}, {"corrupted", corrupted}, {"id", ex.clean.source_id}};
}

inline ParallelExample parallel_example_from_json(const nlohmann::json& j) {
  ParallelExample ex;
  ex.clean.tokens = j.at("clean").get<std::vector<std::string>>();
  if (j.contains("id")) ex.clean.source_id = j.at("id").get<std::string>();
  ex.noisy = j.at("noisy").get<std::vector<std::string>>();
  for (const auto& c : j.at("corrupted")) {
    ex.corrupted.push_back({c.at("position").get<std::size_t>(), parse_noise_source(c.at("source").get<std::string>())});
  }
  return ex;
}

inline void write_dataset(std::ostream& out, const std::vector<ParallelExample>& data) {
  for (const auto& ex : data) out << to_json(ex).dump() << '\n';
}

inline void write_dataset_file(const std::string& path, const std::vector<ParallelExample>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path);
  write_dataset(out, data);
}

inline std::vector<ParallelExample> read_dataset(std::istream& in, const std::string& name = "dataset") {
  std::vector<ParallelExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(parallel_example_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kParse, name + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (auto err = check_invariants(out.back())) {
      fail(ErrorCode::kParse, name + ":" + std::to_string(lineno) + ": " + *err);
    }
  }
  return out;
}

inline std::vector<ParallelExample> read_dataset_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open dataset " + path);
  return read_dataset(in, path);
}

}  // namespace spellforge
