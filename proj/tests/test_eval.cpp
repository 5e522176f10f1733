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

#include <cmath>

#include "spellforge/eval.hpp"
#include "spellforge/rng.hpp"

namespace sf = spellforge;

TEST(ClassifyOutcome, OutcomeDefinitionRows) {
  EXPECT_EQ(sf::classify_outcome("thier", "their", "their"), sf::Outcome::kTP);
  EXPECT_EQ(sf::classify_outcome("their", "there", "their"), sf::Outcome::kFP);
  EXPECT_EQ(sf::classify_outcome("thier", "there", "their"), sf::Outcome::kFN);
  EXPECT_EQ(sf::classify_outcome("their", "their", "their"), sf::Outcome::kTN);
}

TEST(FBeta, PublishedPairs) {
  EXPECT_NEAR(sf::f_beta_score(0.751, 0.928, 0.5), 0.781, 1e-3);
  EXPECT_NEAR(sf::f_beta_score(0.959, 0.959, 0.5), 0.959, 1e-12);
  EXPECT_NEAR(sf::f_beta_score(0.755, 0.865, 0.5), 0.775, 1e-3);
  EXPECT_EQ(sf::f_beta_score(0.0, 0.0, 0.5), 0.0);
}

TEST(FBeta, FixedPointAtEqualPrecisionRecall) {
  for (int i = 1; i <= 1000; ++i) {
    const double p = i / 1000.0;
    EXPECT_NEAR(sf::f_beta_score(p, p, 0.5), p, 1e-15);
  }
}

TEST(ComputeMetrics, ClosedFormsAndFlags) {
  sf::OutcomeCounts c{6, 2, 3, 9};
  auto m = sf::compute_metrics(c, 0.5);
  EXPECT_DOUBLE_EQ(m.accuracy, 15.0 / 20.0);
  EXPECT_DOUBLE_EQ(m.precision, 6.0 / 8.0);
  EXPECT_DOUBLE_EQ(m.recall, 6.0 / 9.0);
  EXPECT_FALSE(m.precision_undefined);

  auto z = sf::compute_metrics({0, 0, 0, 4}, 0.5);
  EXPECT_TRUE(z.precision_undefined);
  EXPECT_TRUE(z.recall_undefined);
  EXPECT_EQ(z.f_beta, 0.0);
  EXPECT_EQ(z.accuracy, 1.0);
  EXPECT_THROW(sf::compute_metrics({}, 0.5), sf::Error);
}

TEST(ComputeMetrics, MonotoneInTruePositives) {
  sf::Rng rng(3);
  for (int t = 0; t < 2000; ++t) {
    sf::OutcomeCounts c{rng.uniform_index(50), rng.uniform_index(50), rng.uniform_index(50), 1 + rng.uniform_index(50)};
    auto before = sf::compute_metrics(c);
    ++c.tp;
    auto after = sf::compute_metrics(c);
    EXPECT_GE(after.precision, before.precision);
    EXPECT_GE(after.recall, before.recall);
    EXPECT_GE(after.f_beta, before.f_beta);
  }
}

TEST(Category, SingleCorrectedPosition) {
  sf::Vocabulary v(sf::VocabKind::kWord, std::vector<std::string>{"their"});
  sf::MetricsAccumulator acc(&v);
  acc.add("thier", "their", "their");
  auto r = acc.report();
  EXPECT_TRUE(r.non_word.present);
  EXPECT_EQ(r.non_word.detection_recall, 1.0);
  EXPECT_EQ(r.non_word.correction_precision, 1.0);
  EXPECT_FALSE(r.real_word.present);
}

TEST(Category, RealWordRowArithmetic) {
  EXPECT_NEAR(sf::f_beta_score(0.916, 0.889, 0.5), 0.911, 1e-3);
}

TEST(Category, PartitionsCorruptedPositions) {
  sf::Vocabulary v(sf::VocabKind::kWord, std::vector<std::string>{"a", "b", "c"});
  sf::MetricsAccumulator acc(&v);
  acc.add("b", "a", "a");   // real-word, fixed
  acc.add("x", "x", "a");   // non-word, undetected
  acc.add("y", "c", "a");   // non-word, detected wrongly
  acc.add("a", "a", "a");   // clean
  auto r = acc.report();
  EXPECT_EQ(r.real_word_counts.positions + r.non_word_counts.positions, 3u);
  EXPECT_EQ(r.non_word.detection_recall, 0.5);
  EXPECT_EQ(r.non_word.correction_precision, 0.0);
  EXPECT_EQ(r.real_word.f_beta, 1.0);
}

TEST(Report, CsvRoundTripJsonFieldsDeterminism) {
  sf::Vocabulary v(sf::VocabKind::kWord, std::vector<std::string>{"a", "b"});
  sf::MetricsAccumulator acc(&v);
  acc.add("b", "a", "a");
  acc.add("q", "b", "a");
  acc.add("a", "b", "a");
  acc.add("a", "a", "a");
  acc.count("skipped_sentences", 2);
  acc.count("bio2_disagreements", 5);
  const auto r = acc.report(0.5);
  const auto csv = sf::emit_report(r, sf::ReportFormat::kCsv);
  EXPECT_EQ(sf::parse_report_csv(csv), r);
  const auto json = nlohmann::json::parse(sf::emit_report(r, sf::ReportFormat::kJson));
  EXPECT_EQ(json.at("beta").get<double>(), 0.5);
  EXPECT_EQ(json.at("counters").at("skipped_sentences").get<int>(), 2);
  EXPECT_EQ(json.at("counters").at("bio2_disagreements").get<int>(), 5);
  EXPECT_EQ(sf::emit_report(r, sf::ReportFormat::kText), sf::emit_report(acc.report(0.5), sf::ReportFormat::kText));
  const auto text = sf::emit_report(r, sf::ReportFormat::kText);
  EXPECT_LT(text.find("Acc"), text.find("P "));
  EXPECT_LT(text.find("R "), text.find("F0.5"));
}

// Property: streaming counts agree with a recount from the raw triples, and
// sharded accumulation merges to the same report.
TEST(MetricsProperty, StreamingEqualsBruteForceTenThousandCases) {
  sf::Rng rng(77);
  const std::vector<std::string> pool = {"a", "b", "c", "d", "xx", "yy"};  // xx, yy out of vocabulary
  sf::Vocabulary v(sf::VocabKind::kWord, std::vector<std::string>{"a", "b", "c", "d"});
  std::size_t cases = 0;
  for (; cases < 10000; ++cases) {
    const auto n = 1 + rng.uniform_index(100);
    std::vector<std::array<std::string, 3>> triples;
    for (std::size_t i = 0; i < n; ++i) {
      triples.push_back({pool[rng.uniform_index(pool.size())], pool[rng.uniform_index(pool.size())],
                         pool[rng.uniform_index(4)]});
    }
    sf::MetricsAccumulator whole(&v), left(&v), right(&v);
    const auto cut = rng.uniform_index(n + 1);
    for (std::size_t i = 0; i < n; ++i) {
      whole.add(triples[i][0], triples[i][1], triples[i][2]);
      (i < cut ? left : right).add(triples[i][0], triples[i][1], triples[i][2]);
    }
    right.merge(left);

    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0, rw = 0, rw_det = 0, rw_fix = 0, nw = 0, nw_det = 0, nw_fix = 0;
    for (const auto& [noisy, pred, gold] : triples) {
      if (noisy != gold && pred == gold) ++tp;
      if (noisy == gold && pred != gold) ++fp;
      if (noisy != gold && pred != gold) ++fn;
      if (noisy == gold && pred == gold) ++tn;
      if (noisy != gold) {
        const bool real = noisy.size() == 1;
        (real ? rw : nw)++;
        if (pred != noisy) (real ? rw_det : nw_det)++;
        if (pred == gold) (real ? rw_fix : nw_fix)++;
      }
    }
    const auto r = whole.report(0.5);
    ASSERT_EQ(r.counts, (sf::OutcomeCounts{tp, fp, fn, tn}));
    ASSERT_EQ(r.real_word_counts, (sf::CategoryCounts{rw, rw_det, rw_fix}));
    ASSERT_EQ(r.non_word_counts, (sf::CategoryCounts{nw, nw_det, nw_fix}));
    const double total = static_cast<double>(n);
    ASSERT_EQ(r.overall.accuracy, static_cast<double>(tp + tn) / total);
    ASSERT_EQ(r.overall.precision, tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0);
    ASSERT_EQ(r.overall.recall, tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0);
    ASSERT_EQ(right.report(0.5), r);
    for (double m : {r.overall.accuracy, r.overall.precision, r.overall.recall, r.overall.f_beta}) {
      ASSERT_GE(m, 0.0);
      ASSERT_LE(m, 1.0);
    }
  }
  EXPECT_EQ(cases, 10000u);
}
