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

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "spellforge/keyboard.hpp"
#include "spellforge/noise.hpp"
#include "spellforge/toy.hpp"

namespace sf = spellforge;

namespace {

struct Fixture {
  sf::Vocabulary words{sf::VocabKind::kWord,
                       std::vector<std::string>{"their", "cat", "noise", "correct", "form", "from", "aaaa", "ab"}};
  sf::Vocabulary chars = sf::derive_char_vocab(words);
  sf::KeyboardAdjacency keyboard = sf::KeyboardAdjacency::qwerty();
  sf::SynthResources synth{&chars, &keyboard, 20};
};

std::string sorted(std::string s) {
  std::sort(s.begin(), s.end());
  return s;
}

}  // namespace

TEST(Lexicon, SkipsIdentityAndDeduplicatesAcrossFiles) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto a = (dir / "sf_lex_a.tsv").string(), b = (dir / "sf_lex_b.tsv").string();
  std::ofstream(a) << "receive\treceive\ntheir\tthier\n";
  std::ofstream(b) << "their\tthier\nfrom\tform\n";
  sf::LexiconLoadStats stats;
  std::vector<std::string> paths = {a, b};
  auto lex = sf::load_lexicon(paths, &stats);
  EXPECT_EQ(lex.num_pairs(), 2u);
  EXPECT_EQ(stats.skipped_identical, 1u);
  EXPECT_EQ(stats.duplicates, 1u);
  EXPECT_FALSE(lex.has("receive"));
  EXPECT_FALSE(lex.has("Their"));  // case-sensitive
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST(Lexicon, ThreeFieldsIsParseErrorWithLine) {
  std::istringstream in("a\tb\nx\ty\tz\n");
  sf::MisspellingLexicon lex;
  try {
    sf::load_lexicon_into(lex, in, "lex");
    FAIL();
  } catch (const sf::Error& e) {
    EXPECT_EQ(e.code(), sf::ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find("lex:2"), std::string::npos);
  }
}

TEST(SplitKnown, FloorOfFractionDeterministic) {
  sf::MisspellingLexicon lex;
  for (int i = 0; i < 10; ++i) lex.add("w" + std::to_string(i), "m" + std::to_string(i));
  auto a = sf::split_known(lex, 0.8, 3);
  auto b = sf::split_known(lex, 0.8, 3);
  EXPECT_EQ(a.known.num_pairs(), 8u);
  EXPECT_EQ(a.known, b.known);
  EXPECT_EQ(a.full, lex);
  EXPECT_EQ(sf::split_known(lex, 1.0, 9).known, lex);
  EXPECT_THROW(sf::split_known(lex, 0.0, 1), sf::Error);
}

TEST(NoiseKind, SerializedNames) {
  EXPECT_EQ(sf::to_string(sf::NoiseKind::kSwap), "Swap");
  EXPECT_EQ(sf::to_string(sf::NoiseKind::kMiddleRandom), "MiddleRandom");
  EXPECT_EQ(sf::to_string(sf::NoiseKind::kFullyRandom), "FullyRandom");
  EXPECT_EQ(sf::to_string(sf::NoiseKind::kKeyboardTypo), "KeyboardTypo");
  EXPECT_EQ(sf::to_string(sf::NoiseKind::kRandomGenerate), "RandomGenerate");
  for (auto k : sf::kAllNoiseKinds) EXPECT_EQ(sf::parse_noise_source(sf::to_string(k)), sf::source_of(k));
  EXPECT_EQ(sf::parse_noise_source("NaturalLexicon"), sf::NoiseSource::kNaturalLexicon);
}

TEST(Synth, SwapIsOneAdjacentInteriorTransposition) {
  Fixture f;
  sf::Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    auto r = sf::synth_misspell("noise", sf::NoiseKind::kSwap, f.synth, rng);
    ASSERT_EQ(r.kind, sf::NoiseKind::kSwap);
    ASSERT_NE(r.text, "noise");
    ASSERT_EQ(sorted(r.text), sorted("noise"));
    std::vector<std::size_t> diff;
    for (std::size_t k = 0; k < 5; ++k) {
      if (r.text[k] != "noise"[k]) diff.push_back(k);
    }
    ASSERT_EQ(diff.size(), 2u);
    EXPECT_EQ(diff[1], diff[0] + 1);
    EXPECT_GE(diff[0], 1u);
    EXPECT_LE(diff[1], 3u);
  }
}

TEST(Synth, MiddleRandomKeepsEnds) {
  Fixture f;
  sf::Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    auto r = sf::synth_misspell("correct", sf::NoiseKind::kMiddleRandom, f.synth, rng);
    ASSERT_NE(r.text, "correct");
    EXPECT_EQ(r.text.front(), 'c');
    EXPECT_EQ(r.text.back(), 't');
    EXPECT_EQ(sorted(r.text.substr(1, 5)), sorted("orrec"));
  }
}

TEST(Synth, FullyRandomPreservesMultiset) {
  Fixture f;
  sf::Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    auto r = sf::synth_misspell("cat", sf::NoiseKind::kFullyRandom, f.synth, rng);
    ASSERT_NE(r.text, "cat");
    EXPECT_EQ(sorted(r.text), sorted("cat"));
  }
}

TEST(Synth, KeyboardTypoForcedDraw) {
  Fixture f;
  const auto nb = f.keyboard.neighbors(U'a');
  // hand-enumerated QWERTY neighbours of 'a'
  std::u32string set(nb.begin(), nb.end());
  std::sort(set.begin(), set.end());
  EXPECT_EQ(set, U"qswz");
  EXPECT_EQ(sf::keyboard_typo_at("cat", 1, U's'), "cst");
}

TEST(Synth, KeyboardTypoHammingOneWithNeighbour) {
  Fixture f;
  sf::Rng rng(4);
  for (int i = 0; i < 300; ++i) {
    auto r = sf::synth_misspell("correct", sf::NoiseKind::kKeyboardTypo, f.synth, rng);
    ASSERT_EQ(r.text.size(), 7u);
    std::size_t pos = 7, diffs = 0;
    for (std::size_t k = 0; k < 7; ++k) {
      if (r.text[k] != "correct"[k]) {
        ++diffs;
        pos = k;
      }
    }
    ASSERT_EQ(diffs, 1u);
    const auto nb = f.keyboard.neighbors(static_cast<char32_t>("correct"[pos]));
    EXPECT_NE(std::find(nb.begin(), nb.end(), static_cast<char32_t>(r.text[pos])), nb.end());
  }
}

TEST(Synth, RandomGenerateUsesCharVocabWithinLength) {
  Fixture f;
  sf::Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    auto r = sf::synth_misspell("cat", sf::NoiseKind::kRandomGenerate, f.synth, rng);
    ASSERT_NE(r.text, "cat");
    ASSERT_GE(r.text.size(), 1u);
    ASSERT_LE(r.text.size(), 20u);
    for (char c : r.text) EXPECT_TRUE(f.chars.contains(std::string(1, c)));
  }
}

TEST(Synth, IneligibleWordsFallBack) {
  Fixture f;
  sf::Rng rng(6);
  for (auto kind : {sf::NoiseKind::kSwap, sf::NoiseKind::kMiddleRandom}) {
    for (int i = 0; i < 100; ++i) {
      auto short_word = sf::synth_misspell("ab", kind, f.synth, rng);
      EXPECT_NE(short_word.text, "ab");
      EXPECT_NE(short_word.kind, kind);
      auto flat = sf::synth_misspell("aaaa", kind, f.synth, rng);
      EXPECT_NE(flat.text, "aaaa");
    }
  }
}

TEST(ReplacementCount, ArithmeticExamples) {
  EXPECT_EQ(sf::replacement_count(10, 0.05), 1u);
  EXPECT_EQ(sf::replacement_count(200, 1.0), 200u);
  EXPECT_EQ(sf::replacement_count(9, 0.25), 2u);
  EXPECT_EQ(sf::replacement_count(1, 0.0), 1u);
}

TEST(ReplacementCount, AlphaIsClippedHalfNormal) {
  sf::Rng rng(9);
  double sum = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double a = sf::sample_alpha(0.2, rng);
    ASSERT_GE(a, 0.0);
    ASSERT_LE(a, 1.0);
    sum += a;
  }
  // E|N(0, s)| = s * sqrt(2 / pi); clipping at 1 is negligible for s = 0.2
  EXPECT_NEAR(sum / n, 0.2 * std::sqrt(2.0 / std::numbers::pi), 2e-3);
}

TEST(Classify, RealAndNonWord) {
  Fixture f;
  EXPECT_EQ(sf::classify_misspelling("thier", f.words), sf::MisspellingClass::kNonWord);
  EXPECT_EQ(sf::classify_misspelling("form", f.words), sf::MisspellingClass::kRealWord);
  EXPECT_EQ(sf::classify_misspelling("from", f.words), sf::MisspellingClass::kRealWord);
}

TEST(Corrupt, ForcedNaturalDraw) {
  Fixture f;
  sf::MisspellingLexicon lex;
  lex.add("their", "thier");
  sf::NoiseResources res{&lex, &f.words, &f.chars, &f.keyboard};
  sf::SentenceRecord clean{{"their", "cat"}, "s"};
  // only position 0 is coverable, and m is always >= 1
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    sf::Rng rng(seed);
    auto ex = sf::corrupt_sentence(clean, res, {}, rng);
    EXPECT_EQ(ex.noisy, (std::vector<std::string>{"thier", "cat"}));
    ASSERT_EQ(ex.corrupted.size(), 1u);
    EXPECT_EQ(ex.corrupted[0], (sf::Corruption{0, sf::NoiseSource::kNaturalLexicon}));
  }
}

TEST(Corrupt, UncoverableSentenceIsEmittedClean) {
  Fixture f;
  sf::MisspellingLexicon lex;
  sf::NoiseResources res{&lex, &f.words, &f.chars, &f.keyboard};
  sf::CorruptionStats stats;
  auto out = sf::corrupt_dataset({{{"cat", "form"}, "s"}}, res, {}, &stats);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_TRUE(out[0].corrupted.empty());
  EXPECT_EQ(out[0].noisy, out[0].clean.tokens);
  EXPECT_EQ(stats.uncorrupted_sentences, 1u);
}

TEST(Corrupt, DatasetInvariantsDeterminismAndJsonRoundTrip) {
  sf::ToyConfig tc;
  tc.num_sentences = 300;
  auto toy = sf::make_toy(tc);
  sf::Vocabulary words(sf::VocabKind::kWord, toy.words);
  auto chars = sf::derive_char_vocab(words);
  auto kb = sf::KeyboardAdjacency::qwerty();
  sf::NoiseResources res{&toy.lexicon, &words, &chars, &kb};
  sf::CorruptionConfig cfg;
  cfg.seed = 11;
  cfg.synthetic_fraction = 0.5;
  sf::CorruptionStats stats;
  auto a = sf::corrupt_dataset(toy.sentences, res, cfg, &stats);
  auto b = sf::corrupt_dataset(toy.sentences, res, cfg);
  EXPECT_EQ(a, b);
  for (const auto& ex : a) EXPECT_FALSE(sf::check_invariants(ex).has_value());
  EXPECT_GT(stats.corrupted_positions, 0u);
  EXPECT_GE(stats.real_word_fraction(), 0.0);
  EXPECT_LE(stats.real_word_fraction(), 1.0);

  std::ostringstream out;
  sf::write_dataset(out, a);
  std::istringstream in(out.str());
  EXPECT_EQ(sf::read_dataset(in), a);
}

TEST(Corrupt, ReaderRejectsBrokenInvariant) {
  std::istringstream in(R"({"clean":["a","b"],"noisy":["a","c"],"corrupted":[]})" "\n");
  EXPECT_THROW(sf::read_dataset(in), sf::Error);
}

TEST(Corrupt, NaturalOnlyNeverTagsSynthetic) {
  sf::ToyConfig tc;
  tc.num_sentences = 200;
  auto toy = sf::make_toy(tc);
  sf::Vocabulary words(sf::VocabKind::kWord, toy.words);
  auto chars = sf::derive_char_vocab(words);
  auto kb = sf::KeyboardAdjacency::qwerty();
  sf::NoiseResources res{&toy.lexicon, &words, &chars, &kb};
  for (const auto& ex : sf::corrupt_dataset(toy.sentences, res, {})) {
    for (const auto& c : ex.corrupted) EXPECT_EQ(c.source, sf::NoiseSource::kNaturalLexicon);
  }
}

TEST(Toy, ContextualPresetGivesEveryWordARealWordConfusion) {
  auto tc = sf::ToyConfig::contextual();
  tc.num_sentences = 50;
  const auto toy = sf::make_toy(tc);
  const std::set<std::string> vocab(toy.words.begin(), toy.words.end());
  std::set<std::string> with_real;
  for (const auto& [word, entry] : toy.lexicon.pairs()) {
    if (vocab.contains(entry.misspelling)) with_real.insert(word);
  }
  EXPECT_EQ(with_real.size(), vocab.size());
  for (const auto& s : toy.sentences) {
    for (const auto& w : s.tokens) EXPECT_TRUE(vocab.contains(w));
  }
}
