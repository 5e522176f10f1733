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

#include <array>
#include <charconv>
#include <fstream>
#include <string>
#include <string_view>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "spellforge/autodiff/transformer.hpp"
#include "spellforge/error.hpp"

namespace spellforge {

enum class Arch : std::uint32_t { kWord = 0, kChar = 1, kWordChar = 2, kSubword = 3 };

inline constexpr std::array<Arch, 4> kAllArchs = {Arch::kWord, Arch::kChar, Arch::kWordChar, Arch::kSubword};

inline std::string_view to_string(Arch a) {
  switch (a) {
    case Arch::kWord: return "word";
    case Arch::kChar: return "char";
    case Arch::kWordChar: return "wordchar";
    case Arch::kSubword: return "subword";
  }
  return "?";
}

inline Arch parse_arch(std::string_view s) {
  for (Arch a : kAllArchs) {
    if (to_string(a) == s) return a;
  }
  fail(ErrorCode::kConfig, "unknown architecture '" + std::string(s) + "' (expected word, char, wordchar or subword)");
}

inline bool uses_word_branch(Arch a) { return a == Arch::kWord || a == Arch::kWordChar; }
inline bool uses_char_branch(Arch a) { return a == Arch::kChar || a == Arch::kWordChar; }

/// Encoder shapes for all three columns. vocab_size is filled in from the
/// loaded resources, never from the config file.
struct ModelConfig {
  ad::EncoderConfig word, chars, subword;
  double init_std = 0.02;

  // 128 hidden, 2 layers, 4 heads everywhere. The char column holds [CLS]
  // plus up to 20 characters.
  static ModelConfig desk() {
    ModelConfig c;
    c.word.max_seq_len = 256;
    c.subword.max_seq_len = 256;
    c.chars.max_seq_len = 21;
    return c;
  }

  static ModelConfig full_scale() {
    ModelConfig c;
    c.word = {512, 6, 8, 256};
    c.subword = {768, 12, 12, 256};
    c.chars = {256, 4, 8, 21};
    return c;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

namespace detail {

inline void read_encoder(const boost::property_tree::ptree& pt, const std::string& section, ad::EncoderConfig& e) {
  auto child = pt.get_child_optional(section);
  if (!child) return;
  e.max_seq_len = child->get<std::size_t>("max_seq_length", e.max_seq_len);
  e.hidden_size = child->get<std::size_t>("hidden_size", e.hidden_size);
  e.num_layers = child->get<std::size_t>("num_hidden_layers", e.num_layers);
  e.num_heads = child->get<std::size_t>("num_attention_heads", e.num_heads);
  e.ff_multiplier = child->get<std::size_t>("intermediate_multiplier", e.ff_multiplier);
  e.dropout = child->get<double>("dropout", e.dropout);
  const auto act = child->get<std::string>("hidden_act", std::string(ad::to_string(e.activation)));
  if (act == "gelu") {
    e.activation = ad::Activation::kGelu;
  } else if (act == "relu") {
    e.activation = ad::Activation::kRelu;
  } else {
    fail(ErrorCode::kConfig, "[" + section + "] hidden_act must be gelu or relu, got " + act);
  }
}

// Shortest text that parses back to the same double.
inline std::string shortest(double v) {
  std::array<char, 32> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), r.ptr);
}

inline void write_encoder(boost::property_tree::ptree& pt, const std::string& section, const ad::EncoderConfig& e) {
  pt.put(section + ".max_seq_length", e.max_seq_len);
  pt.put(section + ".hidden_size", e.hidden_size);
  pt.put(section + ".num_hidden_layers", e.num_layers);
  pt.put(section + ".num_attention_heads", e.num_heads);
  pt.put(section + ".intermediate_multiplier", e.ff_multiplier);
  pt.put(section + ".dropout", shortest(e.dropout));
  pt.put(section + ".hidden_act", std::string(ad::to_string(e.activation)));
}

}  // namespace detail

// INI layout, one section per column:
//   [word]  max_seq_length = 256
//           hidden_size = 512
//           num_hidden_layers = 6
//           num_attention_heads = 8
// Missing keys keep the desk defaults.
inline ModelConfig model_config_from_ptree(const boost::property_tree::ptree& pt) {
  ModelConfig c = ModelConfig::desk();
  detail::read_encoder(pt, "word", c.word);
  detail::read_encoder(pt, "char", c.chars);
  detail::read_encoder(pt, "subword", c.subword);
  c.init_std = pt.get<double>("init.std", c.init_std);
  return c;
}

inline ModelConfig load_model_config(const std::string& path) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::read_ini(path, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    fail(ErrorCode::kConfig, "model config " + path + ": " + e.what());
  } catch (const boost::property_tree::ptree_bad_data& e) {
    fail(ErrorCode::kConfig, "model config " + path + ": " + e.what());
  }
  try {
    return model_config_from_ptree(pt);
  } catch (const boost::property_tree::ptree_error& e) {
    fail(ErrorCode::kConfig, "model config " + path + ": " + e.what());
  }
}

inline void model_config_to_ptree(const ModelConfig& c, boost::property_tree::ptree& pt) {
  detail::write_encoder(pt, "word", c.word);
  detail::write_encoder(pt, "char", c.chars);
  detail::write_encoder(pt, "subword", c.subword);
  pt.put("init.std", detail::shortest(c.init_std));
}

// Checks every column as an encoder would, before any data is read.
inline void validate_model_config(const ModelConfig& c) {
  for (auto [name, e] : {std::pair{"word", c.word}, std::pair{"char", c.chars}, std::pair{"subword", c.subword}}) {
    e.vocab_size = 1;
    e.validate(std::string("[") + name + "]");
  }
  if (!(c.init_std > 0)) fail(ErrorCode::kConfig, "[init] std must be > 0");
}

inline void save_model_config(const ModelConfig& c, const std::string& path) {
  boost::property_tree::ptree pt;
  model_config_to_ptree(c, pt);
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path);
  boost::property_tree::write_ini(out, pt);
}

}  // namespace spellforge
