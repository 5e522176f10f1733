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

#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "spellforge/error.hpp"
#include "spellforge/utf8.hpp"

namespace spellforge {

/// Key neighbor map used by the keyboard-typo noise.
class KeyboardAdjacency {
 public:
  // Staggered QWERTY letters: same-row left/right plus the two diagonal keys
  // above and below.
  static KeyboardAdjacency qwerty() {
    static constexpr std::string_view kRows[] = {"qwertyuiop", "asdfghjkl", "zxcvbnm"};
    KeyboardAdjacency adj;
    for (int r = 0; r < 3; ++r) {
      const auto row = kRows[r];
      for (std::size_t i = 0; i < row.size(); ++i) {
        std::u32string n;
        if (i > 0) n.push_back(static_cast<char32_t>(row[i - 1]));
        if (i + 1 < row.size()) n.push_back(static_cast<char32_t>(row[i + 1]));
        // Row r is shifted half a key right of row r-1: key i sits below keys
        // i and i+1 of the row above, and above keys i-1 and i of the row below.
        if (r > 0) {
          const auto up = kRows[r - 1];
          if (i < up.size()) n.push_back(static_cast<char32_t>(up[i]));
          if (i + 1 < up.size()) n.push_back(static_cast<char32_t>(up[i + 1]));
        }
        if (r < 2) {
          const auto down = kRows[r + 1];
          if (i >= 1 && i - 1 < down.size()) n.push_back(static_cast<char32_t>(down[i - 1]));
          if (i < down.size()) n.push_back(static_cast<char32_t>(down[i]));
        }
        adj.neighbors_[static_cast<char32_t>(row[i])] = n;
      }
    }
    return adj;
  }

  // File format: one key per line, `key<TAB>neighbors` (neighbors written as
  // one contiguous UTF-8 string).
  static KeyboardAdjacency load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::kIo, "cannot open keyboard map " + path);
    KeyboardAdjacency adj;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
        fail(ErrorCode::kParse, path + ":" + std::to_string(lineno) + ": expected key<TAB>neighbors");
      }
      const auto key = utf8::decode(line.substr(0, tab));
      if (key.size() != 1) {
        fail(ErrorCode::kParse, path + ":" + std::to_string(lineno) + ": key must be one character");
      }
      adj.neighbors_[key[0]] = utf8::decode(line.substr(tab + 1));
    }
    return adj;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::kIo, "cannot write " + path);
    for (const auto& [k, n] : neighbors_) out << utf8::encode(k) << '\t' << utf8::encode(n) << '\n';
  }

  // Upper-case ASCII letters use their lower-case key's neighbors, upper-cased.
  std::u32string neighbors(char32_t c) const {
    if (auto it = neighbors_.find(c); it != neighbors_.end()) return it->second;
    if (c >= U'A' && c <= U'Z') {
      if (auto it = neighbors_.find(c - U'A' + U'a'); it != neighbors_.end()) {
        std::u32string up = it->second;
        for (auto& x : up) {
          if (x >= U'a' && x <= U'z') x = x - U'a' + U'A';
        }
        return up;
      }
    }
    return {};
  }

  std::size_t size() const { return neighbors_.size(); }

 private:
  std::map<char32_t, std::u32string> neighbors_;
};

}  // namespace spellforge
