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

#include <cstdint>
#include <cstdio>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "spellforge/error.hpp"
#include "spellforge/noise.hpp"
#include "spellforge/utf8.hpp"
#include "spellforge/vocabulary.hpp"

namespace spellforge {

inline constexpr double kDefaultBeta = 0.5;

// Word-level outcomes:
//   TP  noisy wrong, prediction right     FP  noisy right, prediction wrong
//   FN  noisy wrong, prediction wrong     TN  noisy right, prediction right
enum class Outcome { kTP, kFP, kFN, kTN };

inline Outcome classify_outcome(std::string_view noisy, std::string_view predicted, std::string_view gold) {
  const bool noisy_ok = noisy == gold;
  const bool pred_ok = predicted == gold;
  if (!noisy_ok) return pred_ok ? Outcome::kTP : Outcome::kFN;
  return pred_ok ? Outcome::kTN : Outcome::kFP;
}

struct OutcomeCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  void add(Outcome o) {
    switch (o) {
      case Outcome::kTP: ++tp; break;
      case Outcome::kFP: ++fp; break;
      case Outcome::kFN: ++fn; break;
      case Outcome::kTN: ++tn; break;
    }
  }
  OutcomeCounts& operator+=(const OutcomeCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  std::uint64_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const OutcomeCounts&, const OutcomeCounts&) = default;
};

// F_beta = (1 + b^2) P R / (b^2 P + R); 0 when the denominator vanishes.
inline double f_beta_score(double precision, double recall, double beta = kDefaultBeta) {
  const double b2 = beta * beta;
  const double denom = b2 * precision + recall;
  return denom > 0.0 ? (1.0 + b2) * precision * recall / denom : 0.0;
}

// Zero denominators give 0 and set the matching *_undefined flag.
struct OverallMetrics {
  double accuracy = 0, precision = 0, recall = 0, f_beta = 0;
  bool precision_undefined = false, recall_undefined = false;

  friend bool operator==(const OverallMetrics&, const OverallMetrics&) = default;
};

inline double safe_ratio(std::uint64_t num, std::uint64_t den, bool* undefined) {
  if (den == 0) {
    if (undefined) *undefined = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

inline OverallMetrics compute_metrics(const OutcomeCounts& c, double beta = kDefaultBeta) {
  if (c.total() == 0) fail(ErrorCode::kInvalidArgument, "compute_metrics: no evaluated positions");
  OverallMetrics m;
  m.accuracy = safe_ratio(c.tp + c.tn, c.total(), nullptr);
  m.precision = safe_ratio(c.tp, c.tp + c.fp, &m.precision_undefined);
  m.recall = safe_ratio(c.tp, c.tp + c.fn, &m.recall_undefined);
  m.f_beta = f_beta_score(m.precision, m.recall, beta);
  return m;
}

// Per misspelling category, over corrupted positions only (noisy != gold):
// detection recall = changed / positions; correction precision = fixed / changed.
struct CategoryCounts {
  std::uint64_t positions = 0;
  std::uint64_t detected = 0;   // prediction != noisy
  std::uint64_t corrected = 0;  // prediction == gold

  CategoryCounts& operator+=(const CategoryCounts& o) {
    positions += o.positions;
    detected += o.detected;
    corrected += o.corrected;
    return *this;
  }
  friend bool operator==(const CategoryCounts&, const CategoryCounts&) = default;
};

struct CategoryMetrics {
  bool present = false;  // false when the category has no positions
  double detection_recall = 0, correction_precision = 0, f_beta = 0;
  bool precision_undefined = false;

  friend bool operator==(const CategoryMetrics&, const CategoryMetrics&) = default;
};

inline CategoryMetrics category_metrics(const CategoryCounts& c, double beta = kDefaultBeta) {
  CategoryMetrics m;
  if (c.positions == 0) return m;
  m.present = true;
  m.detection_recall = safe_ratio(c.detected, c.positions, nullptr);
  m.correction_precision = safe_ratio(c.corrected, c.detected, &m.precision_undefined);
  m.f_beta = f_beta_score(m.correction_precision, m.detection_recall, beta);
  return m;
}

struct MetricsReport {
  double beta = kDefaultBeta;
  OutcomeCounts counts;
  OverallMetrics overall;
  CategoryCounts real_word_counts, non_word_counts;
  CategoryMetrics real_word, non_word;
  std::map<std::string, std::uint64_t> counters;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Streaming fold over (noisy, predicted, gold) triples. Accumulators merge
/// associatively, so shards can be scored independently.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(const Vocabulary* word_vocab = nullptr) : word_vocab_(word_vocab) {}

  void add(std::string_view noisy, std::string_view predicted, std::string_view gold) {
    counts_.add(classify_outcome(noisy, predicted, gold));
    if (noisy == gold || !word_vocab_) return;
    auto& cat = classify_misspelling(noisy, *word_vocab_) == MisspellingClass::kRealWord ? real_ : non_;
    ++cat.positions;
    if (predicted != noisy) ++cat.detected;
    if (predicted == gold) ++cat.corrected;
  }

  void add_sentence(std::span<const std::string> noisy, std::span<const std::string> predicted,
                    std::span<const std::string> gold) {
    if (noisy.size() != predicted.size() || noisy.size() != gold.size()) {
      fail(ErrorCode::kInvalidArgument, "sentence triple has mismatched token counts");
    }
    for (std::size_t i = 0; i < noisy.size(); ++i) add(noisy[i], predicted[i], gold[i]);
  }

  void count(const std::string& counter, std::uint64_t n = 1) { counters_[counter] += n; }

  void merge(const MetricsAccumulator& o) {
    counts_ += o.counts_;
    real_ += o.real_;
    non_ += o.non_;
    for (const auto& [k, v] : o.counters_) counters_[k] += v;
  }

  const OutcomeCounts& counts() const { return counts_; }

  MetricsReport report(double beta = kDefaultBeta) const {
    MetricsReport r;
    r.beta = beta;
    r.counts = counts_;
    r.overall = compute_metrics(counts_, beta);
    r.real_word_counts = real_;
    r.non_word_counts = non_;
    r.real_word = category_metrics(real_, beta);
    r.non_word = category_metrics(non_, beta);
    r.counters = counters_;
    return r;
  }

 private:
  const Vocabulary* word_vocab_;
  OutcomeCounts counts_;
  CategoryCounts real_, non_;
  std::map<std::string, std::uint64_t> counters_;
};

// ---------------------------------------------------------------------------
// Report serialization

enum class ReportFormat { kText, kCsv, kJson };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "text" || s == "text-table") return ReportFormat::kText;
  if (s == "csv") return ReportFormat::kCsv;
  if (s == "json") return ReportFormat::kJson;
  fail(ErrorCode::kConfig, "unknown report format " + std::string(s));
}

namespace detail {

inline std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::vector<std::pair<std::string, std::string>> flatten(const MetricsReport& r) {
  std::vector<std::pair<std::string, std::string>> f = {
      {"beta", exact(r.beta)},
      {"tp", std::to_string(r.counts.tp)},
      {"fp", std::to_string(r.counts.fp)},
      {"fn", std::to_string(r.counts.fn)},
      {"tn", std::to_string(r.counts.tn)},
      {"accuracy", exact(r.overall.accuracy)},
      {"precision", exact(r.overall.precision)},
      {"recall", exact(r.overall.recall)},
      {"f_beta", exact(r.overall.f_beta)},
      {"precision_undefined", std::to_string(r.overall.precision_undefined)},
      {"recall_undefined", std::to_string(r.overall.recall_undefined)},
  };
  auto cat = [&f](const std::string& p, const CategoryCounts& c, const CategoryMetrics& m) {
    f.emplace_back(p + "_positions", std::to_string(c.positions));
    f.emplace_back(p + "_detected", std::to_string(c.detected));
    f.emplace_back(p + "_corrected", std::to_string(c.corrected));
    f.emplace_back(p + "_present", std::to_string(m.present));
    f.emplace_back(p + "_detection_recall", exact(m.detection_recall));
    f.emplace_back(p + "_correction_precision", exact(m.correction_precision));
    f.emplace_back(p + "_f_beta", exact(m.f_beta));
    f.emplace_back(p + "_precision_undefined", std::to_string(m.precision_undefined));
  };
  cat("real_word", r.real_word_counts, r.real_word);
  cat("non_word", r.non_word_counts, r.non_word);
  for (const auto& [k, v] : r.counters) f.emplace_back("counter." + k, std::to_string(v));
  return f;
}

}  // namespace detail

inline nlohmann::json report_to_json(const MetricsReport& r) {
  auto cat = [](const CategoryCounts& c, const CategoryMetrics& m) {
    nlohmann::json j = {{"positions", c.positions}, {"detected", c.detected}, {"corrected", c.corrected},
                        {"present", m.present}};
    if (m.present) {
      j["detection_recall"] = m.detection_recall;
      j["correction_precision"] = m.correction_precision;
      j["f_beta"] = m.f_beta;
      j["precision_undefined"] = m.precision_undefined;
    }
    return j;
  };
  return {{"beta", r.beta},
          {"counts", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"fn", r.counts.fn}, {"tn", r.counts.tn}}},
          {"overall",
           {{"accuracy", r.overall.accuracy},
            {"precision", r.overall.precision},
            {"recall", r.overall.recall},
            {"f_beta", r.overall.f_beta},
            {"precision_undefined", r.overall.precision_undefined},
            {"recall_undefined", r.overall.recall_undefined}}},
          {"real_word", cat(r.real_word_counts, r.real_word)},
          {"non_word", cat(r.non_word_counts, r.non_word)},
          {"counters", r.counters}};
}

inline void emit_report(const MetricsReport& r, ReportFormat format, std::ostream& out) {
  switch (format) {
    case ReportFormat::kJson:
      out << report_to_json(r).dump(2) << '\n';
      break;
    case ReportFormat::kCsv: {
      const auto f = detail::flatten(r);
      for (std::size_t i = 0; i < f.size(); ++i) out << (i ? "," : "") << f[i].first;
      out << '\n';
      for (std::size_t i = 0; i < f.size(); ++i) out << (i ? "," : "") << f[i].second;
      out << '\n';
      break;
    }
    case ReportFormat::kText: {
      const std::string fb = "F" + detail::fixed3(r.beta).substr(0, 3);
      auto cell = [](const CategoryMetrics& m, double v) { return m.present ? detail::fixed3(v) : std::string("  -  "); };
      out << "Overall    Acc    P      R      " << fb << '\n';
      out << "           " << detail::fixed3(r.overall.accuracy) << "  " << detail::fixed3(r.overall.precision)
          << "  " << detail::fixed3(r.overall.recall) << "  " << detail::fixed3(r.overall.f_beta) << '\n';
      out << "Real-word  P      R      " << fb << '\n';
      out << "           " << cell(r.real_word, r.real_word.correction_precision) << "  "
          << cell(r.real_word, r.real_word.detection_recall) << "  " << cell(r.real_word, r.real_word.f_beta) << '\n';
      out << "Non-word   P      R\n";
      out << "           " << cell(r.non_word, r.non_word.correction_precision) << "  "
          << cell(r.non_word, r.non_word.detection_recall) << '\n';
      out << "counts     tp=" << r.counts.tp << " fp=" << r.counts.fp << " fn=" << r.counts.fn
          << " tn=" << r.counts.tn << " beta=" << detail::exact(r.beta) << '\n';
      for (const auto& [k, v] : r.counters) out << "counter    " << k << "=" << v << '\n';
      break;
    }
  }
}

inline std::string emit_report(const MetricsReport& r, ReportFormat format) {
  std::ostringstream os;
  emit_report(r, format, os);
  return os.str();
}

// Inverse of the CSV form.
inline MetricsReport parse_report_csv(std::string_view csv) {
  std::istringstream in{std::string(csv)};
  std::string header, values;
  if (!std::getline(in, header) || !std::getline(in, values)) fail(ErrorCode::kParse, "report CSV needs two lines");
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(s);
    while (std::getline(ss, cur, ',')) out.push_back(cur);
    return out;
  };
  const auto keys = split(header);
  const auto vals = split(values);
  if (keys.size() != vals.size()) fail(ErrorCode::kParse, "report CSV header and row differ in width");
  std::map<std::string, std::string> kv;
  for (std::size_t i = 0; i < keys.size(); ++i) kv[keys[i]] = vals[i];
  auto d = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) fail(ErrorCode::kParse, "report CSV lacks column " + k);
    return std::stod(it->second);
  };
  auto u = [&](const std::string& k) { return static_cast<std::uint64_t>(std::stoull(kv.at(k))); };
  auto b = [&](const std::string& k) { return kv.at(k) == "1"; };
  MetricsReport r;
  r.beta = d("beta");
  r.counts = {u("tp"), u("fp"), u("fn"), u("tn")};
  r.overall = {d("accuracy"), d("precision"), d("recall"), d("f_beta"), b("precision_undefined"),
               b("recall_undefined")};
  auto cat = [&](const std::string& p, CategoryCounts& c, CategoryMetrics& m) {
    c = {u(p + "_positions"), u(p + "_detected"), u(p + "_corrected")};
    m = {b(p + "_present"), d(p + "_detection_recall"), d(p + "_correction_precision"), d(p + "_f_beta"),
         b(p + "_precision_undefined")};
  };
  cat("real_word", r.real_word_counts, r.real_word);
  cat("non_word", r.non_word_counts, r.non_word);
  for (const auto& [k, v] : kv) {
    if (k.starts_with("counter.")) r.counters[k.substr(8)] = std::stoull(v);
  }
  return r;
}

}  // namespace spellforge
