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
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "spellforge/error.hpp"
#include "spellforge/utf8.hpp"

namespace spellforge {

enum class VocabKind { kWord, kChar, kSubword };

inline std::string_view to_string(VocabKind kind) {
  switch (kind) {
    case VocabKind::kWord: return "word";
    case VocabKind::kChar: return "char";
    case VocabKind::kSubword: return "subword";
  }
  return "?";
}

inline constexpr std::string_view kPadSymbol = "<pad>";
inline constexpr std::string_view kUnkSymbol = "<unk>";
inline constexpr std::string_view kClsSymbol = "[CLS]";
inline constexpr std::string_view kMaskSymbol = "<mask>";

// Reserved symbols per vocabulary kind, in id order.
inline std::vector<std::string> special_symbols(VocabKind kind) {
  switch (kind) {
    case VocabKind::kWord:
      return {std::string(kPadSymbol), std::string(kUnkSymbol)};
    case VocabKind::kChar:
      return {std::string(kClsSymbol), std::string(kPadSymbol), std::string(kUnkSymbol)};
    case VocabKind::kSubword:
      return {std::string(kPadSymbol), std::string(kUnkSymbol), std::string(kMaskSymbol)};
  }
  return {};
}

using SymbolId = std::int32_t;

/// Closed symbol table with contiguous ids. Specials always come first.
class Vocabulary {
 public:
  Vocabulary() = default;

  // Builds a vocabulary from corpus-derived symbols; the kind's specials are
  // prepended. Duplicate symbols (or symbols colliding with a special) are
  // dropped, keeping the first occurrence.
  Vocabulary(VocabKind kind, std::span<const std::string> symbols) : kind_(kind) {
    for (auto& s : special_symbols(kind)) insert(s);
    num_specials_ = entries_.size();
    for (const auto& s : symbols) {
      if (!id_of_.contains(s)) insert(s);
    }
  }

  VocabKind kind() const { return kind_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t num_specials() const { return num_specials_; }
  // Number of corpus-derived (non-special) entries.
  std::size_t num_regular() const { return entries_.size() - num_specials_; }

  const std::vector<std::string>& entries() const { return entries_; }
  const std::string& symbol(SymbolId id) const { return entries_.at(static_cast<std::size_t>(id)); }

  std::optional<SymbolId> find(std::string_view s) const {
    auto it = id_of_.find(std::string(s));
    if (it == id_of_.end()) return std::nullopt;
    return it->second;
  }

  // True for corpus-derived symbols only; specials are not "in" the vocabulary
  // for membership purposes.
  bool contains(std::string_view s) const {
    auto id = find(s);
    return id && !is_special(*id);
  }

  bool is_special(SymbolId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < num_specials_;
  }

  SymbolId id_of(std::string_view s) const {
    auto id = find(s);
    if (!id) fail(ErrorCode::kInvalidArgument, "symbol not in vocabulary: " + std::string(s));
    return *id;
  }

  SymbolId special_id(std::string_view special) const { return id_of(special); }
  SymbolId unk_id() const { return id_of(kUnkSymbol); }
  SymbolId pad_id() const { return id_of(kPadSymbol); }

  // FNV-1a over kind and entries; used to bind checkpoints to vocabularies.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::string_view s) {
      for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
      }
      h ^= 0xff;
      h *= 0x100000001b3ULL;
    };
    feed(to_string(kind_));
    for (const auto& e : entries_) feed(e);
    return h;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::kIo, "cannot write vocabulary file " + path);
    for (const auto& e : entries_) out << e << '\n';
    if (!out) fail(ErrorCode::kIo, "write failed for " + path);
  }

  static Vocabulary load(const std::string& path, VocabKind kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::kIo, "cannot open vocabulary file " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
    }
    const auto specials = special_symbols(kind);
    if (lines.size() < specials.size()) {
      fail(ErrorCode::kParse, path + ": vocabulary shorter than its special symbols");
    }
    for (std::size_t i = 0; i < specials.size(); ++i) {
      if (lines[i] != specials[i]) {
        fail(ErrorCode::kParse, path + ":" + std::to_string(i + 1) + ": expected special " +
                                    specials[i] + ", found " + lines[i]);
      }
    }
    Vocabulary v;
    v.kind_ = kind;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty() || !utf8::is_valid(lines[i])) {
        fail(ErrorCode::kParse, path + ":" + std::to_string(i + 1) + ": empty or invalid symbol");
      }
      if (v.id_of_.contains(lines[i])) {
        fail(ErrorCode::kParse, path + ":" + std::to_string(i + 1) + ": duplicate symbol " + lines[i]);
      }
      v.insert(lines[i]);
    }
    v.num_specials_ = specials.size();
    return v;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.kind_ == b.kind_ && a.entries_ == b.entries_;
  }

 private:
  void insert(const std::string& s) {
    id_of_.emplace(s, static_cast<SymbolId>(entries_.size()));
    entries_.push_back(s);
  }

  VocabKind kind_ = VocabKind::kWord;
  std::vector<std::string> entries_;
  std::unordered_map<std::string, SymbolId> id_of_;
  std::size_t num_specials_ = 0;
};

}  // namespace spellforge
