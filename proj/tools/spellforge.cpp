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

// Command-line front end. Progress and counters go to stderr as one JSON
// object per line. Exit codes: 0 success, 2 config error, 3 stage failure.

#include <Eigen/Core>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "json.hpp"
#include "spellforge/autodiff/gradcheck.hpp"
#include "spellforge/pipeline.hpp"
#include "spellforge/toy.hpp"

namespace sf = spellforge;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

void progress(const json& j) { std::cerr << j.dump() << std::endl; }

// Word vocabulary plus the optional subword model, loaded from files.
struct Resources {
  sf::Vocabulary words, chars;
  std::optional<sf::SubwordModel> subword;
  std::size_t max_word_len = sf::kDefaultMaxWordLen;

  sf::TokenizerResources view() const { return {&words, &chars, subword ? &*subword : nullptr, max_word_len}; }
};

struct ResourcePaths {
  std::string word_vocab, subword_vocab, subword_merges;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--word-vocab", word_vocab, "word vocabulary file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--subword-vocab", subword_vocab, "subword vocabulary file")->check(CLI::ExistingFile);
    cmd->add_option("--subword-merges", subword_merges, "subword merges file")->check(CLI::ExistingFile);
  }

  Resources load(bool need_subword) const {
    Resources r;
    r.words = sf::Vocabulary::load(word_vocab, sf::VocabKind::kWord);
    r.chars = sf::derive_char_vocab(r.words);
    if (!subword_vocab.empty() != !subword_merges.empty()) {
      sf::fail(sf::ErrorCode::kConfig, "--subword-vocab and --subword-merges go together");
    }
    if (!subword_vocab.empty()) r.subword = sf::SubwordModel::load(subword_vocab, subword_merges);
    if (need_subword && !r.subword) sf::fail(sf::ErrorCode::kConfig, "the subword architecture needs --subword-vocab");
    return r;
  }
};

std::vector<std::vector<std::string>> read_token_lines(const std::string& path) {
  std::vector<std::vector<std::string>> out;
  for (auto& s : sf::read_sentences_file(path)) out.push_back(std::move(s.tokens));
  return out;
}

void write_token_lines(std::ostream& out, const std::vector<std::string>& tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i) out << (i ? " " : "") << tokens[i];
  out << '\n';
}

template <typename Model>
bool f64_check(const Model& model, const sf::PreparedSet& set, const sf::TokenizerResources& res) {
  auto any = sf::build_model<double>(model.arch(), model.config(), res, 1);
  return std::visit(
      [&](auto& m) {
        std::vector<const sf::TrainingExample*> batch;
        for (std::size_t i = 0; i < std::min<std::size_t>(2, set.examples.size()); ++i) batch.push_back(&set.examples[i]);
        if (batch.empty()) sf::fail(sf::ErrorCode::kInsufficientData, "no examples for the 64-bit check");
        sf::ad::GradCheckOptions opts;
        opts.step = 1e-4;
        opts.floor = 1e-6;
        const auto r = sf::ad::finite_difference_check<double>(m.parameters(), [&] { return m.loss(batch, {}); }, opts);
        progress({{"event", "f64_check"},
                  {"checked", r.checked},
                  {"max_rel_error", r.max_rel_error},
                  {"worst", r.worst.parameter},
                  {"passed", r.passed}});
        return r.passed;
      },
      any);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spellforge: context-aware spelling correction"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "worker threads for dense kernels")->check(CLI::PositiveNumber);
  app.set_version_flag("--version", std::string(sf::kVersion));

  // build-vocab
  auto* bv = app.add_subcommand("build-vocab", "count words and write the word (and char) vocabulary");
  std::vector<std::string> bv_inputs;
  std::size_t bv_max = sf::kDefaultWordVocabSize;
  std::string bv_out, bv_char_out;
  bv->add_option("--input", bv_inputs, "corpus files, one sentence per line")->required()->check(CLI::ExistingFile);
  bv->add_option("--max-size", bv_max, "number of regular words to keep");
  bv->add_option("--out", bv_out, "word vocabulary output")->required();
  bv->add_option("--char-out", bv_char_out, "char vocabulary output");

  // split
  auto* sp = app.add_subcommand("split", "filter a corpus and split it into train/dev/test");
  std::string sp_input, sp_vocab, sp_out = ".";
  sf::SplitSpec sp_spec{.seed = 1, .dev_size = 1000, .test_size = 1000, .train_size = std::nullopt};
  std::optional<std::size_t> sp_train;
  sf::FilterLimits sp_limits;
  sp->add_option("--input", sp_input, "corpus file")->required()->check(CLI::ExistingFile);
  sp->add_option("--vocab", sp_vocab, "word vocabulary; sentences with other words are dropped")->check(CLI::ExistingFile);
  sp->add_option("--seed", sp_spec.seed);
  sp->add_option("--dev-size", sp_spec.dev_size);
  sp->add_option("--test-size", sp_spec.test_size);
  sp->add_option("--train-size", sp_train);
  sp->add_option("--max-sent-len", sp_limits.max_sent_len);
  sp->add_option("--max-word-len", sp_limits.max_word_len);
  sp->add_option("--out-dir", sp_out, "directory for train.txt, dev.txt and test.txt");

  // corrupt
  auto* co = app.add_subcommand("corrupt", "inject misspellings into clean sentences");
  std::string co_input, co_vocab, co_out, co_keyboard, co_use = "known";
  std::vector<std::string> co_lexicons;
  double co_known = 0.8;
  std::uint64_t co_split_seed = 1;
  sf::CorruptionConfig co_cfg;
  co->add_option("--input", co_input, "clean sentences")->required()->check(CLI::ExistingFile);
  co->add_option("--vocab", co_vocab, "word vocabulary")->required()->check(CLI::ExistingFile);
  co->add_option("--lexicon", co_lexicons, "misspelling lexicon TSV files")->required()->check(CLI::ExistingFile);
  co->add_option("--known-fraction", co_known, "share of lexicon pairs available for training");
  co->add_option("--known-seed", co_split_seed, "seed of the known/held-out lexicon split");
  co->add_option("--use", co_use, "lexicon part to draw from")->check(CLI::IsMember({"known", "full", "heldout"}));
  co->add_option("--seed", co_cfg.seed);
  co->add_option("--synthetic-fraction", co_cfg.synthetic_fraction);
  co->add_option("--sigma", co_cfg.sigma);
  co->add_option("--max-word-len", co_cfg.max_word_len);
  co->add_option("--keyboard", co_keyboard, "keyboard adjacency file (default QWERTY)")->check(CLI::ExistingFile);
  co->add_option("--out", co_out, "JSON-lines dataset output")->required();

  // train-subword
  auto* ts = app.add_subcommand("train-subword", "learn subword merges");
  std::string ts_input, ts_vocab_out, ts_merges_out;
  std::size_t ts_size = 1000;
  ts->add_option("--input", ts_input, "clean training sentences")->required()->check(CLI::ExistingFile);
  ts->add_option("--vocab-size", ts_size, "target number of regular subwords");
  ts->add_option("--out-vocab", ts_vocab_out)->required();
  ts->add_option("--out-merges", ts_merges_out)->required();

  // pretrain-mlm
  auto* pm = app.add_subcommand("pretrain-mlm", "masked-LM pretraining of a subword encoder");
  ResourcePaths pm_res;
  std::string pm_input, pm_config, pm_out;
  sf::MlmConfig pm_cfg;
  std::uint64_t pm_seed = 1;
  pm_res.add_to(pm);
  pm->add_option("--input", pm_input, "clean sentences")->required()->check(CLI::ExistingFile);
  pm->add_option("--config", pm_config, "model config INI")->check(CLI::ExistingFile);
  pm->add_option("--steps", pm_cfg.steps);
  pm->add_option("--batch-size", pm_cfg.batch_size);
  pm->add_option("--lr", pm_cfg.learning_rate);
  pm->add_option("--mask-rate", pm_cfg.mask_rate);
  pm->add_option("--seed", pm_seed);
  pm->add_option("--out", pm_out, "checkpoint output")->required();

  // train
  auto* tr = app.add_subcommand("train", "train a corrector");
  ResourcePaths tr_res;
  std::string tr_arch = "wordchar", tr_config, tr_data, tr_dev, tr_out, tr_init;
  sf::TrainSchedule tr_sched;
  bool tr_f64 = false;
  tr_res.add_to(tr);
  tr->add_option("--arch", tr_arch)->check(CLI::IsMember({"word", "char", "wordchar", "subword"}));
  tr->add_option("--config", tr_config, "model config INI")->check(CLI::ExistingFile);
  tr->add_option("--data", tr_data, "training dataset (JSON lines)")->required()->check(CLI::ExistingFile);
  tr->add_option("--dev", tr_dev, "dev dataset for checkpoint selection")->check(CLI::ExistingFile);
  tr->add_option("--seed", tr_sched.seed);
  tr->add_option("--epochs", tr_sched.epochs);
  tr->add_option("--batch-size", tr_sched.batch_size);
  tr->add_option("--lr", tr_sched.learning_rate);
  tr->add_option("--init", tr_init, "start from the weights of this checkpoint")->check(CLI::ExistingFile);
  tr->add_flag("--f64-check", tr_f64, "finite-difference check in 64-bit before training");
  tr->add_option("--out", tr_out, "checkpoint output")->required();

  // correct
  auto* cr = app.add_subcommand("correct", "correct sentences with a trained model");
  ResourcePaths cr_res;
  std::string cr_model, cr_in, cr_out;
  cr_res.add_to(cr);
  cr->add_option("--model", cr_model, "checkpoint")->required()->check(CLI::ExistingFile);
  cr->add_option("--in", cr_in, "noisy sentences, one per line")->required()->check(CLI::ExistingFile);
  cr->add_option("--out", cr_out, "output file (default stdout)");

  // eval
  auto* ev = app.add_subcommand("eval", "score predictions against a dataset");
  std::string ev_gold, ev_pred, ev_vocab, ev_format = "text";
  double ev_beta = sf::kDefaultBeta;
  ev->add_option("--gold", ev_gold, "dataset with clean and noisy sides (JSON lines)")->required()->check(CLI::ExistingFile);
  ev->add_option("--pred", ev_pred, "predicted sentences, one per line")->required()->check(CLI::ExistingFile);
  ev->add_option("--vocab", ev_vocab, "word vocabulary, for the real-word/non-word split")->check(CLI::ExistingFile);
  ev->add_option("--beta", ev_beta);
  ev->add_option("--format", ev_format)->check(CLI::IsMember({"text", "text-table", "csv", "json"}));

  // run and ablate
  auto* rn = app.add_subcommand("run", "end-to-end pipeline into a content-addressed run directory");
  auto* ab = app.add_subcommand("ablate", "train several arms on shared data and compare them");
  std::string pl_config, ab_format = "text";
  bool pl_force = false;
  std::vector<std::string> ab_arms;
  std::vector<std::uint64_t> ab_seeds;
  std::optional<std::size_t> pl_epochs;
  std::string pl_workdir;
  for (auto* cmd : {rn, ab}) {
    cmd->add_option("--config", pl_config, "pipeline config INI")->required()->check(CLI::ExistingFile);
    cmd->add_flag("--force", pl_force, "re-run even if a complete run with this config exists");
    cmd->add_option("--epochs", pl_epochs, "override [train] epochs");
    cmd->add_option("--workdir", pl_workdir, "override [paths] workdir");
  }
  ab->add_option("--arms", ab_arms, "arms such as word char wordchar wordchar+randchar subword+mlm")->delimiter(',');
  ab->add_option("--seeds", ab_seeds, "seeds")->delimiter(',');
  ab->add_option("--format", ab_format)->check(CLI::IsMember({"text", "text-table", "csv", "json"}));

  // make-toy
  auto* mt = app.add_subcommand("make-toy", "write a small synthetic corpus, lexicon and pipeline config");
  auto mt_cfg = sf::ToyConfig::contextual();
  mt_cfg.num_sentences = 2000;
  std::string mt_out = "toy";
  mt->add_option("--out-dir", mt_out);
  mt->add_option("--sentences", mt_cfg.num_sentences);
  mt->add_option("--vocab-size", mt_cfg.vocab_size);
  mt->add_option("--seed", mt_cfg.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  Eigen::setNbThreads(threads);

  try {
    if (*bv) {
      sf::WordCounts counts;
      std::size_t n = 0;
      for (const auto& path : bv_inputs) {
        for (const auto& s : sf::read_sentences_file(path)) {
          counts.add(s);
          ++n;
        }
      }
      const auto vocab = sf::build_word_vocab(counts, bv_max);
      vocab.save(bv_out);
      if (!bv_char_out.empty()) sf::derive_char_vocab(vocab).save(bv_char_out);
      progress({{"event", "done"}, {"command", "build-vocab"}, {"sentences", n}, {"vocab_size", vocab.size()}});
    } else if (*sp) {
      auto sentences = sf::read_sentences_file(sp_input);
      const std::size_t before = sentences.size();
      if (!sp_vocab.empty()) {
        sentences = sf::filter_sentences(sentences, sf::Vocabulary::load(sp_vocab, sf::VocabKind::kWord), sp_limits);
      }
      sp_spec.train_size = sp_train;
      const auto s = sf::split_corpus(sentences, sp_spec);
      std::filesystem::create_directories(sp_out);
      const std::filesystem::path dir(sp_out);
      sf::write_sentences_file((dir / "train.txt").string(), s.train);
      sf::write_sentences_file((dir / "dev.txt").string(), s.dev);
      sf::write_sentences_file((dir / "test.txt").string(), s.test);
      progress({{"event", "done"},
                {"command", "split"},
                {"read", before},
                {"kept", sentences.size()},
                {"train", s.train.size()},
                {"dev", s.dev.size()},
                {"test", s.test.size()}});
    } else if (*co) {
      const auto vocab = sf::Vocabulary::load(co_vocab, sf::VocabKind::kWord);
      const auto chars = sf::derive_char_vocab(vocab);
      sf::LexiconLoadStats lex_stats;
      const auto split = sf::split_known(sf::load_lexicon(co_lexicons, &lex_stats), co_known, co_split_seed);
      const auto& lexicon = co_use == "known" ? split.known : co_use == "full" ? split.full : split.heldout;
      const auto keyboard = co_keyboard.empty() ? sf::KeyboardAdjacency::qwerty() : sf::KeyboardAdjacency::load(co_keyboard);
      sf::CorruptionStats stats;
      const auto data =
          sf::corrupt_dataset(sf::read_sentences_file(co_input), {&lexicon, &vocab, &chars, &keyboard}, co_cfg, &stats);
      sf::write_dataset_file(co_out, data);
      progress({{"event", "done"},
                {"command", "corrupt"},
                {"sentences", stats.sentences},
                {"corrupted_positions", stats.corrupted_positions},
                {"real_word_positions", stats.real_word_positions},
                {"lexicon_pairs", lexicon.num_pairs()}});
    } else if (*ts) {
      const auto model = sf::train_subword(sf::read_sentences_file(ts_input), ts_size);
      model.save(ts_vocab_out, ts_merges_out);
      progress({{"event", "done"}, {"command", "train-subword"}, {"vocab_size", model.vocab().size()}, {"merges", model.merges().size()}});
    } else if (*pm) {
      const auto res = pm_res.load(true);
      const auto cfg = pm_config.empty() ? sf::ModelConfig::desk() : sf::load_model_config(pm_config);
      sf::SubwordTagModel<float> model(cfg, res.view(), sf::stream_seed(pm_seed, 1));
      std::vector<std::vector<sf::SymbolId>> corpus;
      for (const auto& s : sf::read_sentences_file(pm_input)) {
        auto ids = sf::subword_encode(s.tokens, *res.subword).first;
        if (!ids.empty() && ids.size() <= cfg.subword.max_seq_len) corpus.push_back(std::move(ids));
      }
      pm_cfg.seed = sf::stream_seed(pm_seed, 77);
      const auto r = sf::mlm_pretrain(model.encoder(), corpus, res.subword->vocab(), pm_cfg);
      for (std::size_t i = 0; i < r.losses.size(); ++i) progress({{"event", "mlm_step"}, {"step", i + 1}, {"loss", r.losses[i]}});
      if (r.diverged) sf::fail(sf::ErrorCode::kDiverged, "masked-LM pretraining diverged");
      sf::save_checkpoint(model, res.view(), pm_out, r.losses.size());
      progress({{"event", "done"}, {"command", "pretrain-mlm"}, {"masked", r.counts.masked}, {"selected", r.counts.selected}});
    } else if (*tr) {
      const auto arch = sf::parse_arch(tr_arch);
      const auto res = tr_res.load(arch == sf::Arch::kSubword);
      auto cfg = tr_config.empty() ? sf::ModelConfig::desk() : sf::load_model_config(tr_config);
      std::optional<sf::CheckpointData> init;
      if (!tr_init.empty()) {
        init = sf::read_checkpoint(tr_init);
        if (init->arch != arch) sf::fail(sf::ErrorCode::kConfig, "--init checkpoint has a different architecture");
        sf::check_hashes(*init, res.view());
        cfg = init->config;
      }
      auto any = sf::build_model<float>(arch, cfg, res.view(), sf::stream_seed(tr_sched.seed, 1));
      const auto train_data = sf::read_dataset_file(tr_data);
      const auto dev_data = tr_dev.empty() ? std::vector<sf::ParallelExample>{} : sf::read_dataset_file(tr_dev);
      int rc = 0;
      std::visit(
          [&](auto& model) {
            if (init) sf::copy_tensors(*init, model.parameters(), false);
            const auto train = sf::prepare_examples(model, train_data, res.view());
            const auto dev = sf::prepare_examples(model, dev_data, res.view());
            progress({{"event", "prepared"},
                      {"train", train.examples.size()},
                      {"train_skipped", train.skipped()},
                      {"dev", dev.examples.size()},
                      {"parameters", model.parameters().num_scalars()}});
            if (tr_f64 && !f64_check(model, train, res.view())) {
              rc = kExitStage;
              return;
            }
            auto sched = tr_sched;
            sched.seed = sf::stream_seed(tr_sched.seed, 2);
            const auto r = sf::train_model(model, train, dev_data.empty() ? nullptr : &dev, sched, [](const sf::EpochLog& l) {
              json j = {{"event", "epoch"}, {"epoch", l.epoch + 1}, {"loss", l.mean_loss}, {"lr", l.learning_rate}, {"seconds", l.seconds}};
              if (l.dev) j["dev_f0.5"] = l.dev->overall.f_beta;
              progress(j);
            });
            if (r.diverged) {
              progress({{"event", "diverged"}, {"epochs_completed", r.log.size()}});
              rc = kExitStage;
            }
            sf::save_checkpoint(model, res.view(), tr_out, r.steps);
            progress({{"event", "done"}, {"command", "train"}, {"steps", r.steps}, {"best_epoch", r.best_epoch ? json(*r.best_epoch + 1) : json()}});
          },
          any);
      return rc;
    } else if (*cr) {
      const auto d = sf::read_checkpoint(cr_model);
      const auto res = cr_res.load(d.arch == sf::Arch::kSubword);
      auto any = sf::model_from_checkpoint<float>(d, res.view());
      std::ofstream file;
      if (!cr_out.empty()) {
        file.open(cr_out);
        if (!file) sf::fail(sf::ErrorCode::kIo, "cannot write " + cr_out);
      }
      std::ostream& out = cr_out.empty() ? std::cout : file;
      std::size_t n = 0;
      std::visit(
          [&](const auto& model) {
            for (const auto& tokens : read_token_lines(cr_in)) {
              write_token_lines(out, sf::correct_sentence(tokens, model, res.view()));
              ++n;
            }
          },
          any);
      progress({{"event", "done"}, {"command", "correct"}, {"sentences", n}});
    } else if (*ev) {
      const auto gold = sf::read_dataset_file(ev_gold);
      const auto pred = read_token_lines(ev_pred);
      if (pred.size() != gold.size()) {
        sf::fail(sf::ErrorCode::kInvalidArgument, "prediction file has " + std::to_string(pred.size()) +
                                                      " lines, dataset has " + std::to_string(gold.size()));
      }
      std::optional<sf::Vocabulary> vocab;
      if (!ev_vocab.empty()) vocab = sf::Vocabulary::load(ev_vocab, sf::VocabKind::kWord);
      sf::MetricsAccumulator acc(vocab ? &*vocab : nullptr);
      for (std::size_t i = 0; i < gold.size(); ++i) acc.add_sentence(gold[i].noisy, pred[i], gold[i].clean.tokens);
      sf::emit_report(acc.report(ev_beta), sf::parse_report_format(ev_format), std::cout);
    } else if (*rn || *ab) {
      auto cfg = sf::load_pipeline_config(pl_config);
      if (pl_epochs) cfg.experiment.schedule.epochs = *pl_epochs;
      if (!pl_workdir.empty()) cfg.workdir = pl_workdir;
      if (!ab_arms.empty()) cfg.arms = ab_arms;
      if (!ab_seeds.empty()) cfg.seeds = ab_seeds;
      const auto r = sf::run_pipeline(cfg, {.force = pl_force, .progress = progress});
      if (*ab) {
        std::ifstream in(r.run_dir / (ab_format == "csv" ? "comparison.csv" : ab_format == "json" ? "comparison.json" : "comparison.txt"));
        std::cout << in.rdbuf();
      } else {
        std::cout << r.run_dir.string() << '\n';
      }
    } else if (*mt) {
      const auto toy = sf::make_toy(mt_cfg);
      const std::filesystem::path dir(mt_out);
      std::filesystem::create_directories(dir);
      sf::write_sentences_file((dir / "corpus.txt").string(), toy.sentences);
      toy.lexicon.save((dir / "lexicon.tsv").string());
      sf::PipelineConfig pc;
      pc.corpus = "corpus.txt";
      pc.lexicon = "lexicon.tsv";
      pc.workdir = "runs";
      pc.split.dev_size = std::max<std::size_t>(1, toy.sentences.size() / 8);
      pc.split.test_size = pc.split.dev_size;
      pc.experiment.schedule.epochs = 10;
      pc.experiment.schedule.learning_rate = 1e-3;
      pc.experiment.subword_vocab_size = 200;
      pc.arms = {"word", "char", "wordchar"};
      for (auto* e : {&pc.experiment.model.word, &pc.experiment.model.chars, &pc.experiment.model.subword}) e->hidden_size = 64;
      std::ofstream((dir / "pipeline.ini").string()) << sf::canonical_config(pc);
      progress({{"event", "done"}, {"command", "make-toy"}, {"sentences", toy.sentences.size()}, {"lexicon_pairs", toy.lexicon.num_pairs()}});
    }
  } catch (const sf::StageFailure& e) {
    progress({{"event", "error"}, {"stage", e.stage()}, {"code", sf::to_string(e.code())}, {"message", e.what()}});
    return kExitStage;
  } catch (const sf::Error& e) {
    progress({{"event", "error"}, {"code", sf::to_string(e.code())}, {"message", e.what()}});
    return e.code() == sf::ErrorCode::kConfig ? kExitConfig : kExitStage;
  } catch (const std::exception& e) {
    progress({{"event", "error"}, {"code", "internal"}, {"message", e.what()}});
    return kExitStage;
  }
  return 0;
}
