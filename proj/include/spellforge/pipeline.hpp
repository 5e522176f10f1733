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

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "spellforge/experiment.hpp"

namespace spellforge {

inline constexpr std::string_view kVersion = "0.1.0";

/// Everything one run needs. Stored as INI:
///   [paths]     corpus, lexicon, keyboard (optional), workdir
///   [corpus]    max_vocab, max_sent_len, max_word_len, split_seed, dev_size, test_size, train_size
///   [noise]     sigma, known_fraction, random_char_fraction, seed
///   [tokenizer] subword_vocab_size
///   [train]     arms, seeds, epochs, batch_size, learning_rate, beta, select_on_dev
///   [mlm]       steps, batch_size, learning_rate, mask_rate
///   [word] [char] [subword] [init]  model columns, as in the model config
struct PipelineConfig {
  std::string corpus, lexicon, keyboard, workdir = "runs";
  std::size_t max_vocab = kDefaultWordVocabSize;
  FilterLimits limits;
  SplitSpec split{.seed = 1, .dev_size = 1000, .test_size = 1000, .train_size = std::nullopt};
  ExperimentConfig experiment;
  std::vector<std::string> arms = {"wordchar"};
  std::vector<std::uint64_t> seeds = {1};
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      const auto b = cur.find_first_not_of(" \t"), e = cur.find_last_not_of(" \t");
      if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

template <typename T>
std::string join_list(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

}  // namespace detail

inline PipelineConfig pipeline_config_from_ptree(const boost::property_tree::ptree& pt) {
  PipelineConfig c;
  auto& x = c.experiment;
  try {
    c.corpus = pt.get("paths.corpus", c.corpus);
    c.lexicon = pt.get("paths.lexicon", c.lexicon);
    c.keyboard = pt.get("paths.keyboard", c.keyboard);
    c.workdir = pt.get("paths.workdir", c.workdir);
    c.max_vocab = pt.get("corpus.max_vocab", c.max_vocab);
    c.limits.max_sent_len = pt.get("corpus.max_sent_len", c.limits.max_sent_len);
    c.limits.max_word_len = pt.get("corpus.max_word_len", c.limits.max_word_len);
    x.max_word_len = c.limits.max_word_len;
    c.split.seed = pt.get("corpus.split_seed", c.split.seed);
    c.split.dev_size = pt.get("corpus.dev_size", c.split.dev_size);
    c.split.test_size = pt.get("corpus.test_size", c.split.test_size);
    if (auto t = pt.get_optional<std::size_t>("corpus.train_size")) c.split.train_size = *t;
    x.sigma = pt.get("noise.sigma", x.sigma);
    x.known_fraction = pt.get("noise.known_fraction", x.known_fraction);
    x.random_char_fraction = pt.get("noise.random_char_fraction", x.random_char_fraction);
    x.noise_seed = pt.get("noise.seed", x.noise_seed);
    x.subword_vocab_size = pt.get("tokenizer.subword_vocab_size", x.subword_vocab_size);
    if (auto a = pt.get_optional<std::string>("train.arms")) c.arms = detail::split_list(*a);
    if (auto s = pt.get_optional<std::string>("train.seeds")) {
      c.seeds.clear();
      for (const auto& v : detail::split_list(*s)) c.seeds.push_back(std::stoull(v));
    }
    x.schedule.epochs = pt.get("train.epochs", x.schedule.epochs);
    x.schedule.batch_size = pt.get("train.batch_size", x.schedule.batch_size);
    x.schedule.learning_rate = pt.get("train.learning_rate", x.schedule.learning_rate);
    x.schedule.beta = pt.get("train.beta", x.schedule.beta);
    x.select_on_dev = pt.get("train.select_on_dev", x.select_on_dev);
    x.mlm.steps = pt.get("mlm.steps", x.mlm.steps);
    x.mlm.batch_size = pt.get("mlm.batch_size", x.mlm.batch_size);
    x.mlm.learning_rate = pt.get("mlm.learning_rate", x.mlm.learning_rate);
    x.mlm.mask_rate = pt.get("mlm.mask_rate", x.mlm.mask_rate);
    x.model = model_config_from_ptree(pt);
  } catch (const boost::property_tree::ptree_error& e) {
    fail(ErrorCode::kConfig, std::string("pipeline config: ") + e.what());
  } catch (const std::logic_error& e) {
    fail(ErrorCode::kConfig, std::string("pipeline config: bad number: ") + e.what());
  }
  return c;
}

inline boost::property_tree::ptree pipeline_config_to_ptree(const PipelineConfig& c) {
  boost::property_tree::ptree pt;
  const auto& x = c.experiment;
  pt.put("paths.corpus", c.corpus);
  pt.put("paths.lexicon", c.lexicon);
  pt.put("paths.keyboard", c.keyboard);
  pt.put("paths.workdir", c.workdir);
  pt.put("corpus.max_vocab", c.max_vocab);
  pt.put("corpus.max_sent_len", c.limits.max_sent_len);
  pt.put("corpus.max_word_len", c.limits.max_word_len);
  pt.put("corpus.split_seed", c.split.seed);
  pt.put("corpus.dev_size", c.split.dev_size);
  pt.put("corpus.test_size", c.split.test_size);
  if (c.split.train_size) pt.put("corpus.train_size", *c.split.train_size);
  pt.put("noise.sigma", detail::shortest(x.sigma));
  pt.put("noise.known_fraction", detail::shortest(x.known_fraction));
  pt.put("noise.random_char_fraction", detail::shortest(x.random_char_fraction));
  pt.put("noise.seed", x.noise_seed);
  pt.put("tokenizer.subword_vocab_size", x.subword_vocab_size);
  pt.put("train.arms", detail::join_list(c.arms));
  pt.put("train.seeds", detail::join_list(c.seeds));
  pt.put("train.epochs", x.schedule.epochs);
  pt.put("train.batch_size", x.schedule.batch_size);
  pt.put("train.learning_rate", detail::shortest(x.schedule.learning_rate));
  pt.put("train.beta", detail::shortest(x.schedule.beta));
  pt.put("train.select_on_dev", x.select_on_dev);
  pt.put("mlm.steps", x.mlm.steps);
  pt.put("mlm.batch_size", x.mlm.batch_size);
  pt.put("mlm.learning_rate", detail::shortest(x.mlm.learning_rate));
  pt.put("mlm.mask_rate", detail::shortest(x.mlm.mask_rate));
  model_config_to_ptree(x.model, pt);
  return pt;
}

// Relative paths in the file are taken relative to the file's directory.
inline PipelineConfig load_pipeline_config(const std::string& path) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::read_ini(path, pt);
  } catch (const boost::property_tree::ptree_error& e) {
    fail(ErrorCode::kConfig, "pipeline config " + path + ": " + e.what());
  }
  auto c = pipeline_config_from_ptree(pt);
  const auto base = std::filesystem::path(path).parent_path();
  for (auto* p : {&c.corpus, &c.lexicon, &c.keyboard, &c.workdir}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  }
  return c;
}

// Canonical INI text; its hash names the run directory.
inline std::string canonical_config(const PipelineConfig& c) {
  std::ostringstream os;
  boost::property_tree::write_ini(os, pipeline_config_to_ptree(c));
  return os.str();
}

inline std::string config_hash(const PipelineConfig& c) { return detail::hex16(detail::fnv1a(canonical_config(c))); }

// Upfront validation: nothing is read or written if this throws.
inline void validate_pipeline_config(const PipelineConfig& c) {
  auto need_file = [](const std::string& what, const std::string& path) {
    if (path.empty()) fail(ErrorCode::kConfig, what + " path is not set");
    if (!std::filesystem::is_regular_file(path)) fail(ErrorCode::kConfig, what + " " + path + " does not exist");
  };
  need_file("corpus", c.corpus);
  need_file("lexicon", c.lexicon);
  if (!c.keyboard.empty()) need_file("keyboard", c.keyboard);
  if (c.workdir.empty()) fail(ErrorCode::kConfig, "workdir is not set");
  if (c.arms.empty()) fail(ErrorCode::kConfig, "no arms configured");
  if (c.seeds.empty()) fail(ErrorCode::kConfig, "no seeds configured");
  for (const auto& a : c.arms) {
    try {
      parse_arm(a);
    } catch (const Error& e) {
      fail(ErrorCode::kConfig, e.what());
    }
  }
  if (c.split.dev_size == 0 || c.split.test_size == 0) fail(ErrorCode::kConfig, "dev_size and test_size must be > 0");
  const auto& x = c.experiment;
  if (!(x.sigma > 0)) fail(ErrorCode::kConfig, "sigma must be > 0");
  if (!(x.known_fraction > 0 && x.known_fraction <= 1)) fail(ErrorCode::kConfig, "known_fraction must lie in (0, 1]");
  if (!(x.random_char_fraction >= 0 && x.random_char_fraction <= 1)) {
    fail(ErrorCode::kConfig, "random_char_fraction must lie in [0, 1]");
  }
  if (x.schedule.epochs == 0 || x.schedule.batch_size == 0) fail(ErrorCode::kConfig, "epochs and batch_size must be > 0");
  validate_model_config(x.model);
}

/// A stage that threw. Carries the stage name; outputs written so far are
/// left in the run directory.
class StageFailure : public std::runtime_error {
 public:
  StageFailure(std::string stage, ErrorCode code, const std::string& what)
      : std::runtime_error("stage " + stage + " failed: " + what), stage_(std::move(stage)), code_(code) {}
  const std::string& stage() const { return stage_; }
  ErrorCode code() const { return code_; }

 private:
  std::string stage_;
  ErrorCode code_;
};

using ProgressSink = std::function<void(const nlohmann::json&)>;

struct PipelineOptions {
  bool force = false;
  ProgressSink progress;
};

struct PipelineResult {
  std::filesystem::path run_dir;
  bool reused = false;  // matching manifest found, nothing executed
  std::vector<ArmResult> arms;
  std::vector<ComparisonRow> rows;
};

// Dev and test must only carry natural misspellings.
inline void assert_natural_only(const std::vector<ParallelExample>& data, const std::string& split) {
  for (const auto& ex : data) {
    for (const auto& c : ex.corrupted) {
      if (c.source != NoiseSource::kNaturalLexicon) {
        fail(ErrorCode::kInvalidArgument, split + " contains a synthetic misspelling (" + std::string(to_string(c.source)) + ")");
      }
    }
  }
}

inline std::string comparison_name(const ArmResult& r, std::size_t num_seeds) {
  return num_seeds > 1 ? r.name + "/s" + std::to_string(r.seed) : r.name;
}

/// build vocab -> split -> corrupt -> train each arm and seed -> evaluate ->
/// report. The run directory is <workdir>/run-<config hash>; a complete
/// manifest with the same hash makes this a no-op unless `force` is set.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, const PipelineOptions& opt = {}) {
  namespace fs = std::filesystem;
  using nlohmann::json;
  validate_pipeline_config(cfg);
  const std::string canonical = canonical_config(cfg);
  const std::string hash = detail::hex16(detail::fnv1a(canonical));
  PipelineResult result;
  result.run_dir = fs::path(cfg.workdir) / ("run-" + hash);
  const auto manifest_path = result.run_dir / "manifest.json";
  auto emit = [&](json j) {
    if (opt.progress) opt.progress(j);
  };

  if (!opt.force && fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    const auto m = json::parse(in, nullptr, false);
    if (!m.is_discarded() && m.value("config_hash", "") == hash && m.value("status", "") == "complete") {
      result.reused = true;
      emit({{"event", "reuse"}, {"run_dir", result.run_dir.string()}, {"config_hash", hash}});
      return result;
    }
  }
  fs::create_directories(result.run_dir / "checkpoints");
  fs::create_directories(result.run_dir / "reports");
  {
    std::ofstream(result.run_dir / "config.ini") << canonical;
  }

  json manifest = {{"tool", "spellforge"},
                   {"version", kVersion},
                   {"config_hash", hash},
                   {"config", canonical},
                   {"seeds",
                    {{"split", cfg.split.seed}, {"noise", cfg.experiment.noise_seed}, {"arms", cfg.seeds}}},
                   {"stages", json::array()},
                   {"status", "running"}};
  auto write_manifest = [&] {
    std::ofstream out(manifest_path);
    out << manifest.dump(2) << '\n';
  };
  write_manifest();

  auto stage = [&](const std::string& name, auto&& body) {
    emit({{"event", "stage_start"}, {"stage", name}});
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const Error& e) {
      manifest["status"] = "failed";
      manifest["failed_stage"] = name;
      manifest["error"] = e.what();
      write_manifest();
      throw StageFailure(name, e.code(), e.what());
    } catch (const std::exception& e) {
      manifest["status"] = "failed";
      manifest["failed_stage"] = name;
      manifest["error"] = e.what();
      write_manifest();
      throw StageFailure(name, ErrorCode::kInvalidArgument, e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest["stages"].push_back({{"name", name}, {"seconds", secs}});
    emit({{"event", "stage_end"}, {"stage", name}, {"seconds", secs}});
  };

  const auto path = [&](const std::string& rel) { return (result.run_dir / rel).string(); };
  Vocabulary word_vocab;
  CorpusSplits splits;
  stage("corpus", [&] {
    const auto sentences = read_sentences_file(cfg.corpus);
    word_vocab = build_word_vocab(sentences, cfg.max_vocab);
    const auto kept = filter_sentences(sentences, word_vocab, cfg.limits);
    splits = split_corpus(kept, cfg.split);
    word_vocab.save(path("word_vocab.txt"));
    derive_char_vocab(word_vocab).save(path("char_vocab.txt"));
    write_sentences_file(path("train.txt"), splits.train);
    write_sentences_file(path("dev.txt"), splits.dev);
    write_sentences_file(path("test.txt"), splits.test);
    emit({{"event", "counters"},
          {"stage", "corpus"},
          {"sentences", sentences.size()},
          {"kept", kept.size()},
          {"train", splits.train.size()},
          {"dev", splits.dev.size()},
          {"test", splits.test.size()},
          {"word_vocab", word_vocab.size()}});
  });

  std::vector<ArmSpec> arms;
  for (const auto& a : cfg.arms) arms.push_back(parse_arm(a));
  const bool need_subword = std::any_of(arms.begin(), arms.end(), [](const ArmSpec& a) { return a.arch == Arch::kSubword; });
  const bool need_random = std::any_of(arms.begin(), arms.end(), [](const ArmSpec& a) { return a.random_char; });
  std::unique_ptr<ExperimentData> data;
  stage("corrupt", [&] {
    LexiconLoadStats lex_stats;
    const auto lexicon = load_lexicon(cfg.lexicon, &lex_stats);
    auto keyboard = cfg.keyboard.empty() ? KeyboardAdjacency::qwerty() : KeyboardAdjacency::load(cfg.keyboard);
    data = prepare_experiment(splits, word_vocab, lexicon, std::move(keyboard), cfg.experiment, need_subword, need_random);
    assert_natural_only(data->dev, "dev");
    assert_natural_only(data->test, "test");
    data->lexicons.known.save(path("lexicon_known.tsv"));
    write_dataset_file(path("train.jsonl"), data->train_natural);
    if (need_random) write_dataset_file(path("train_randchar.jsonl"), data->train_random);
    write_dataset_file(path("dev.jsonl"), data->dev);
    write_dataset_file(path("test.jsonl"), data->test);
    if (data->subword) data->subword->save(path("subword_vocab.txt"), path("subword_merges.txt"));
    emit({{"event", "counters"},
          {"stage", "corrupt"},
          {"lexicon_pairs", lexicon.num_pairs()},
          {"known_pairs", data->lexicons.known.num_pairs()}});
  });

  for (const auto& arm : arms) {
    for (auto seed : cfg.seeds) {
      const std::string tag = arm.name() + "-s" + std::to_string(seed);
      stage("train:" + tag, [&] {
        std::ofstream log(path("reports/" + tag + ".log.jsonl"));
        auto on_epoch = [&](const EpochLog& l) {
          json j = {{"event", "epoch"},
                    {"arm", arm.name()},
                    {"seed", seed},
                    {"epoch", l.epoch + 1},
                    {"loss", l.mean_loss},
                    {"lr", l.learning_rate}};
          if (l.dev) j["dev_f0.5"] = l.dev->overall.f_beta;
          log << j.dump() << '\n';
          emit(j);
        };
        std::string ckpt;
        auto r = run_arm(*data, arm, cfg.experiment, seed, on_epoch, &ckpt);
        if (r.training.diverged) fail(ErrorCode::kDiverged, "training diverged for " + tag);
        write_file_bytes(path("checkpoints/" + tag + ".spfg"), ckpt);
        std::ofstream(path("reports/" + tag + ".dev.json")) << report_to_json(r.dev).dump(2) << '\n';
        std::ofstream(path("reports/" + tag + ".test.json")) << report_to_json(r.test).dump(2) << '\n';
        result.arms.push_back(std::move(r));
      });
    }
  }

  stage("report", [&] {
    for (const auto& r : result.arms) result.rows.push_back({comparison_name(r, cfg.seeds.size()), r.dev, r.test});
    for (auto [fmt, ext] : {std::pair{ReportFormat::kText, "txt"}, std::pair{ReportFormat::kCsv, "csv"},
                            std::pair{ReportFormat::kJson, "json"}}) {
      std::ofstream out(path(std::string("comparison.") + ext));
      emit_comparison(result.rows, fmt, out);
    }
  });

  json artifacts = json::object();
  for (const auto& e : fs::recursive_directory_iterator(result.run_dir)) {
    if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
    const auto rel = fs::relative(e.path(), result.run_dir).generic_string();
    artifacts[rel] = detail::hex16(detail::fnv1a(read_file_bytes(e.path().string())));
  }
  manifest["artifacts"] = artifacts;
  manifest["status"] = "complete";
  write_manifest();
  emit({{"event", "done"}, {"run_dir", result.run_dir.string()}});
  return result;
}

}  // namespace spellforge
