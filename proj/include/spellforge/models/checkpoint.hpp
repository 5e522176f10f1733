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

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "spellforge/autodiff/optim.hpp"
#include "spellforge/error.hpp"
#include "spellforge/models/subword_tag.hpp"
#include "spellforge/models/word_char.hpp"

namespace spellforge {

// Layout (all integers little-endian):
//   "SPFG" u32 version u32 arch u32 dtype
//   3 x encoder block (word, char, subword)   f64 init_std
//   u64 word_hash u64 char_hash u64 subword_hash u64 step
//   u32 tensor count, then per tensor: u32 name length, name, u32 rank, u64 dims
//   raw tensor data in table order (f32 or f64)
//   u8 has_optimizer [u64 adam_step, per tensor: f64 m[], f64 v[]]
inline constexpr char kCheckpointMagic[4] = {'S', 'P', 'F', 'G'};
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

enum class DType : std::uint32_t { kF32 = 0, kF64 = 1 };

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::kF32 : DType::kF64;
}

inline std::uint64_t subword_model_hash(const SubwordModel& m) {
  std::uint64_t h = m.vocab().hash();
  auto feed = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xfe;
    h *= 0x100000001b3ULL;
  };
  for (const auto& [l, r] : m.merges()) {
    feed(l);
    feed(r);
  }
  return h;
}

struct ResourceHashes {
  std::uint64_t word = 0, chars = 0, subword = 0;  // 0: not used by the arch

  friend bool operator==(const ResourceHashes&, const ResourceHashes&) = default;
};

inline ResourceHashes resource_hashes(Arch arch, const TokenizerResources& res) {
  ResourceHashes h;
  h.word = res.word_vocab ? res.word_vocab->hash() : 0;
  if (uses_char_branch(arch) && res.char_vocab) h.chars = res.char_vocab->hash();
  if (arch == Arch::kSubword && res.subword) h.subword = subword_model_hash(*res.subword);
  return h;
}

struct TensorRecord {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;
};

struct CheckpointData {
  std::uint32_t version = kCheckpointFormatVersion;
  Arch arch = Arch::kWordChar;
  DType dtype = DType::kF32;
  ModelConfig config;
  ResourceHashes hashes;
  std::uint64_t step = 0;
  std::vector<TensorRecord> tensors;
  bool has_optimizer = false;
  std::uint64_t optimizer_step = 0;
  std::vector<std::vector<double>> first_moments, second_moments;
};

namespace detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail(ErrorCode::kCheckpointTruncated, "checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline void write_encoder(ByteWriter& w, const ad::EncoderConfig& e) {
  w.u64(e.hidden_size);
  w.u64(e.num_layers);
  w.u64(e.num_heads);
  w.u64(e.max_seq_len);
  w.u64(e.ff_multiplier);
  w.u64(e.vocab_size);
  w.f64(e.dropout);
  w.u32(static_cast<std::uint32_t>(e.activation));
}

inline ad::EncoderConfig read_encoder(ByteReader& r) {
  ad::EncoderConfig e;
  e.hidden_size = r.u64();
  e.num_layers = r.u64();
  e.num_heads = r.u64();
  e.max_seq_len = r.u64();
  e.ff_multiplier = r.u64();
  e.vocab_size = r.u64();
  e.dropout = r.f64();
  const auto act = r.u32();
  if (act > 1) fail(ErrorCode::kParse, "checkpoint: unknown activation code");
  e.activation = static_cast<ad::Activation>(act);
  return e;
}

}  // namespace detail

template <typename Model>
std::string serialize_checkpoint(const Model& model, const TokenizerResources& res, std::uint64_t step = 0) {
  using T = typename std::decay_t<decltype(model.parameters().entries()[0].tensor)>::value_type;
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointFormatVersion);
  w.u32(static_cast<std::uint32_t>(model.arch()));
  w.u32(static_cast<std::uint32_t>(dtype_of<T>()));
  const auto& c = model.config();
  detail::write_encoder(w, c.word);
  detail::write_encoder(w, c.chars);
  detail::write_encoder(w, c.subword);
  w.f64(c.init_std);
  const auto h = resource_hashes(model.arch(), res);
  w.u64(h.word);
  w.u64(h.chars);
  w.u64(h.subword);
  w.u64(step);
  const auto& entries = model.parameters().entries();
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.str(e.name);
    w.u32(static_cast<std::uint32_t>(e.tensor.shape().size()));
    for (auto d : e.tensor.shape()) w.u64(d);
  }
  for (const auto& e : entries) {
    for (T v : e.tensor.values()) {
      if constexpr (std::is_same_v<T, float>) {
        w.f32(v);
      } else {
        w.f64(v);
      }
    }
  }
  w.u8(0);
  return w.data();
}

template <typename Model, typename T>
std::string serialize_checkpoint(const Model& model, const TokenizerResources& res, std::uint64_t step,
                                 ad::Adam<T>& optimizer) {
  std::string out = serialize_checkpoint(model, res, step);
  out.pop_back();
  detail::ByteWriter w;
  w.u8(1);
  w.u64(optimizer.step_count());
  const auto& m = optimizer.first_moments();
  const auto& v = optimizer.second_moments();
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (double x : m[i]) w.f64(x);
    for (double x : v[i]) w.f64(x);
  }
  return out + w.data();
}

inline CheckpointData parse_checkpoint(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 4) fail(ErrorCode::kCheckpointTruncated, "checkpoint shorter than its magic");
  if (r.take(4) != std::string_view(kCheckpointMagic, 4)) fail(ErrorCode::kCheckpointBadMagic, "not a spellforge checkpoint");
  CheckpointData d;
  d.version = r.u32();
  if (d.version != kCheckpointFormatVersion) {
    fail(ErrorCode::kCheckpointVersion, "checkpoint format version " + std::to_string(d.version) + ", expected " +
                                            std::to_string(kCheckpointFormatVersion));
  }
  const auto arch = r.u32();
  if (arch > 3) fail(ErrorCode::kParse, "checkpoint: unknown architecture code");
  d.arch = static_cast<Arch>(arch);
  const auto dtype = r.u32();
  if (dtype > 1) fail(ErrorCode::kParse, "checkpoint: unknown dtype");
  d.dtype = static_cast<DType>(dtype);
  d.config.word = detail::read_encoder(r);
  d.config.chars = detail::read_encoder(r);
  d.config.subword = detail::read_encoder(r);
  d.config.init_std = r.f64();
  d.hashes.word = r.u64();
  d.hashes.chars = r.u64();
  d.hashes.subword = r.u64();
  d.step = r.u64();
  const auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    TensorRecord t;
    t.name = r.str();
    const auto rank = r.u32();
    for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(r.u64());
    d.tensors.push_back(std::move(t));
  }
  for (auto& t : d.tensors) {
    const auto count = ad::numel_of(t.shape);
    r.need(count * (d.dtype == DType::kF32 ? 4 : 8));
    t.values.resize(count);
    for (auto& v : t.values) v = d.dtype == DType::kF32 ? static_cast<double>(r.f32()) : r.f64();
  }
  d.has_optimizer = r.u8() != 0;
  if (d.has_optimizer) {
    d.optimizer_step = r.u64();
    for (const auto& t : d.tensors) {
      const auto count = ad::numel_of(t.shape);
      auto& m = d.first_moments.emplace_back(count);
      auto& v = d.second_moments.emplace_back(count);
      for (auto& x : m) x = r.f64();
      for (auto& x : v) x = r.f64();
    }
  }
  return d;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "write failed for " + path);
}

inline CheckpointData read_checkpoint(const std::string& path) { return parse_checkpoint(read_file_bytes(path)); }

template <typename Model>
void save_checkpoint(const Model& model, const TokenizerResources& res, const std::string& path, std::uint64_t step = 0) {
  write_file_bytes(path, serialize_checkpoint(model, res, step));
}

inline void check_hashes(const CheckpointData& d, const TokenizerResources& res) {
  const auto h = resource_hashes(d.arch, res);
  auto check = [](std::uint64_t want, std::uint64_t got, const char* what) {
    if (want != 0 && want != got) {
      fail(ErrorCode::kCheckpointHashMismatch, std::string("checkpoint was trained with a different ") + what);
    }
  };
  check(d.hashes.word, h.word, "word vocabulary");
  check(d.hashes.chars, h.chars, "char vocabulary");
  check(d.hashes.subword, h.subword, "subword model");
}

// Copies tensors by name. With require_all, the checkpoint must cover every
// parameter exactly; otherwise only matching names are copied.
template <typename T>
std::size_t copy_tensors(const CheckpointData& d, ad::ParameterSet<T>& params, bool require_all) {
  if (require_all && d.tensors.size() != params.size()) {
    fail(ErrorCode::kShapeMismatch, "checkpoint has " + std::to_string(d.tensors.size()) + " tensors, model has " +
                                        std::to_string(params.size()));
  }
  std::size_t copied = 0;
  for (const auto& t : d.tensors) {
    auto* p = params.find(t.name);
    if (!p) {
      if (require_all) fail(ErrorCode::kShapeMismatch, "checkpoint tensor " + t.name + " has no model counterpart");
      continue;
    }
    if (p->shape() != t.shape) {
      fail(ErrorCode::kShapeMismatch, "tensor " + t.name + " has shape " + ad::to_string(t.shape) + " in checkpoint, " +
                                          ad::to_string(p->shape()) + " in model");
    }
    auto& v = p->values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(t.values[i]);
    ++copied;
  }
  return copied;
}

template <typename T>
using AnyModel = std::variant<WordCharModel<T>, SubwordTagModel<T>>;

template <typename T>
AnyModel<T> build_model(Arch arch, const ModelConfig& config, const TokenizerResources& res, std::uint64_t seed) {
  if (arch == Arch::kSubword) return AnyModel<T>(std::in_place_index<1>, config, res, seed);
  return AnyModel<T>(std::in_place_index<0>, arch, config, res, seed);
}

// Nothing is returned unless the whole file parses and validates.
template <typename T>
AnyModel<T> model_from_checkpoint(const CheckpointData& d, const TokenizerResources& res) {
  check_hashes(d, res);
  auto model = build_model<T>(d.arch, d.config, res, 0);
  std::visit(
      [&](auto& m) {
        if (!(m.config() == d.config)) fail(ErrorCode::kShapeMismatch, "checkpoint config does not fit the resources");
        copy_tensors(d, m.parameters(), true);
      },
      model);
  return model;
}

template <typename T>
AnyModel<T> load_checkpoint(const std::string& path, const TokenizerResources& res) {
  return model_from_checkpoint<T>(read_checkpoint(path), res);
}

}  // namespace spellforge
