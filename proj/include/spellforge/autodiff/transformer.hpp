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

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "spellforge/autodiff/ops.hpp"
#include "spellforge/autodiff/parameters.hpp"
#include "spellforge/error.hpp"
#include "spellforge/rng.hpp"

namespace spellforge::ad {

struct EncoderConfig {
  std::size_t hidden_size = 128;
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t max_seq_len = 256;
  std::size_t ff_multiplier = 4;
  double dropout = 0.1;
  std::size_t vocab_size = 0;
  Activation activation = Activation::kGelu;

  std::size_t head_dim() const { return hidden_size / num_heads; }

  void validate(const std::string& what = "encoder") const {
    if (hidden_size == 0 || num_layers == 0 || num_heads == 0 || max_seq_len == 0 || ff_multiplier == 0 ||
        vocab_size == 0) {
      fail(ErrorCode::kConfig, what + ": sizes must all be positive");
    }
    if (hidden_size % num_heads != 0) {
      fail(ErrorCode::kConfig, what + ": hidden_size " + std::to_string(hidden_size) +
                                   " is not divisible by num_heads " + std::to_string(num_heads));
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorCode::kConfig, what + ": dropout must lie in [0, 1)");
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;  // dropout source, required when training
};

// Padded batch of id sequences, packed row-major as [batch, len].
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t len = 0;
  std::vector<std::int32_t> ids;
  std::vector<std::size_t> lengths;

  static SequenceBatch pack(const std::vector<std::vector<std::int32_t>>& seqs, std::int32_t pad_id) {
    SequenceBatch b;
    b.batch = seqs.size();
    for (const auto& s : seqs) b.len = std::max(b.len, s.size());
    b.ids.assign(b.batch * b.len, pad_id);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      std::copy(seqs[i].begin(), seqs[i].end(), b.ids.begin() + static_cast<std::ptrdiff_t>(i * b.len));
      b.lengths.push_back(seqs[i].size());
    }
    return b;
  }
};

// Additive attention mask in the [B*H*L, L] score layout: -inf at padded keys.
template <typename T>
std::vector<T> key_padding_mask(std::span<const std::size_t> lengths, std::size_t len, std::size_t heads) {
  std::vector<T> mask(lengths.size() * heads * len * len, T(0));
  const T neg_inf = -std::numeric_limits<T>::infinity();
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t q = 0; q < len; ++q) {
        T* row = mask.data() + ((b * heads + h) * len + q) * len;
        for (std::size_t k = lengths[b]; k < len; ++k) row[k] = neg_inf;
      }
    }
  }
  return mask;
}

template <typename T>
struct AttentionParams {
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

/// Scaled dot-product attention per head (scale 1/sqrt(head_dim)), heads
/// concatenated and projected. x: [batch*len, d]. `probs_out` receives the
/// attention weights in [batch*heads*len, len] layout when given.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x, const AttentionParams<T>& p, std::size_t heads,
                               std::size_t batch, std::size_t len, const std::vector<T>& additive_mask,
                               const ForwardContext& ctx, double attention_dropout = 0.0,
                               Tensor<T>* probs_out = nullptr) {
  if (heads == 0 || x.cols() % heads) {
    fail(ErrorCode::kConfig, "attention: " + std::to_string(heads) + " heads do not divide width " +
                                 std::to_string(x.cols()));
  }
  const T scale_factor = T(1) / std::sqrt(static_cast<T>(x.cols() / heads));
  auto q = split_heads(linear(x, p.wq, p.bq), batch, len, heads);
  auto k = split_heads(linear(x, p.wk, p.bk), batch, len, heads);
  auto v = split_heads(linear(x, p.wv, p.bv), batch, len, heads);
  auto scores = scale(batched_matmul(q, k, batch * heads, /*transpose_b=*/true), scale_factor);
  auto probs = softmax(mask_add(scores, std::span<const T>(additive_mask)));
  if (probs_out) *probs_out = probs;
  probs = dropout(probs, attention_dropout, ctx.training, ctx.rng);
  auto context = merge_heads(batched_matmul(probs, v, batch * heads, /*transpose_b=*/false), batch, len, heads);
  return linear(context, p.wo, p.bo);
}

/// Token + learned positional embeddings followed by post-norm encoder
/// layers: x = LN(x + Attn(x)); x = LN(x + FF(x)).
template <typename T>
class TransformerEncoder {
 public:
  struct Layer {
    AttentionParams<T> attn;
    Tensor<T> ln1_gamma, ln1_beta, ff_w1, ff_b1, ff_w2, ff_b2, ln2_gamma, ln2_beta;
  };

  TransformerEncoder() = default;

  TransformerEncoder(EncoderConfig config, const std::string& prefix, Rng& init_rng, double init_std = 0.02)
      : config_(config) {
    config_.validate(prefix);
    const std::size_t d = config_.hidden_size, ff = d * config_.ff_multiplier;
    auto weight = [&](const std::string& name, Shape shape) {
      return params_.add(prefix + "." + name, truncated_normal_tensor<T>(std::move(shape), init_std, init_rng));
    };
    auto constant = [&](const std::string& name, std::size_t n, T value) {
      return params_.add(prefix + "." + name, filled_tensor<T>({n}, value));
    };
    token_embedding_ = weight("token_embedding", {config_.vocab_size, d});
    position_embedding_ = weight("position_embedding", {config_.max_seq_len, d});
    for (std::size_t l = 0; l < config_.num_layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      Layer layer;
      layer.attn.wq = weight(p + "attn.wq", {d, d});
      layer.attn.bq = constant(p + "attn.bq", d, T(0));
      layer.attn.wk = weight(p + "attn.wk", {d, d});
      layer.attn.bk = constant(p + "attn.bk", d, T(0));
      layer.attn.wv = weight(p + "attn.wv", {d, d});
      layer.attn.bv = constant(p + "attn.bv", d, T(0));
      layer.attn.wo = weight(p + "attn.wo", {d, d});
      layer.attn.bo = constant(p + "attn.bo", d, T(0));
      layer.ln1_gamma = constant(p + "ln1.gamma", d, T(1));
      layer.ln1_beta = constant(p + "ln1.beta", d, T(0));
      layer.ff_w1 = weight(p + "ff.w1", {d, ff});
      layer.ff_b1 = constant(p + "ff.b1", ff, T(0));
      layer.ff_w2 = weight(p + "ff.w2", {ff, d});
      layer.ff_b2 = constant(p + "ff.b2", d, T(0));
      layer.ln2_gamma = constant(p + "ln2.gamma", d, T(1));
      layer.ln2_beta = constant(p + "ln2.beta", d, T(0));
      layers_.push_back(std::move(layer));
    }
  }

  const EncoderConfig& config() const { return config_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }
  Tensor<T>& position_embedding() { return position_embedding_; }

  // Output: [batch*len, hidden]. Rows at padded positions are computed but
  // never influence rows at real positions.
  Tensor<T> forward(const SequenceBatch& batch, const ForwardContext& ctx) const {
    if (batch.len > config_.max_seq_len) {
      fail(ErrorCode::kInvalidArgument, "sequence of length " + std::to_string(batch.len) +
                                            " exceeds max_seq_len " + std::to_string(config_.max_seq_len));
    }
    if (batch.batch == 0 || batch.len == 0) fail(ErrorCode::kInvalidArgument, "empty batch");
    for (auto n : batch.lengths) {
      if (n == 0) fail(ErrorCode::kInvalidArgument, "encoder input contains an empty sequence");
    }
    std::vector<std::int32_t> positions(batch.batch * batch.len);
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<std::int32_t>(i % batch.len);
    const auto mask = key_padding_mask<T>(batch.lengths, batch.len, config_.num_heads);

    auto h = add(embedding(token_embedding_, batch.ids), embedding(position_embedding_, positions));
    h = dropout(h, config_.dropout, ctx.training, ctx.rng);
    for (const auto& layer : layers_) {
      auto a = multi_head_attention(h, layer.attn, config_.num_heads, batch.batch, batch.len, mask, ctx,
                                    config_.dropout);
      a = dropout(a, config_.dropout, ctx.training, ctx.rng);
      h = layer_norm(add(h, a), layer.ln1_gamma, layer.ln1_beta);
      auto f = linear(activate(linear(h, layer.ff_w1, layer.ff_b1), config_.activation), layer.ff_w2, layer.ff_b2);
      f = dropout(f, config_.dropout, ctx.training, ctx.rng);
      h = layer_norm(add(h, f), layer.ln2_gamma, layer.ln2_beta);
    }
    return h;
  }

 private:
  EncoderConfig config_;
  ParameterSet<T> params_;
  Tensor<T> token_embedding_, position_embedding_;
  std::vector<Layer> layers_;
};

}  // namespace spellforge::ad
