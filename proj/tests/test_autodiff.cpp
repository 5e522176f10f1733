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
#include <limits>
#include <numeric>

#include "spellforge/autodiff/gradcheck.hpp"
#include "spellforge/autodiff/ops.hpp"
#include "spellforge/autodiff/optim.hpp"
#include "spellforge/autodiff/transformer.hpp"

namespace spellforge::ad {
namespace {

using TensorD = Tensor<double>;

TensorD random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0, bool grad = false) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.normal(0.0, scale);
  return TensorD::from({r, c}, v, grad);
}

TEST(Kernels, SoftmaxOfZerosIsUniform) {
  auto y = softmax(TensorD::from({1, 4}, {0, 0, 0, 0}));
  for (double p : y.values()) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(Kernels, SoftmaxRowsAreDistributions) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = Tensor<float>::zeros({7, 13});
    for (auto& v : x.values()) v = static_cast<float>(rng.normal(0.0, 10.0));
    auto y = softmax(x);
    for (std::size_t r = 0; r < 7; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 13; ++c) {
        EXPECT_GE(y.at(r, c), 0.0f);
        s += y.at(r, c);
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Kernels, MatmulMatchesHandArithmetic) {
  auto a = TensorD::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = TensorD::from({3, 4}, {1, 0, 2, -1, 0, 1, 1, 2, 3, -2, 0, 1});
  auto c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 4}));
  const std::vector<double> expected = {10, -4, 4, 6, 22, -7, 13, 12};
  EXPECT_EQ(c.values(), expected);
}

TEST(Kernels, ShapeMismatchNamesKernelAndShapes) {
  auto a = TensorD::zeros({2, 3});
  auto b = TensorD::zeros({4, 2});
  try {
    matmul(a, b);
    FAIL() << "expected a shape error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
    const std::string what = e.what();
    EXPECT_NE(what.find("matmul"), std::string::npos);
    EXPECT_NE(what.find("(2,3)"), std::string::npos);
    EXPECT_NE(what.find("(4,2)"), std::string::npos);
  }
}

TEST(Kernels, LayerNormOfConstantRowIsZero) {
  auto x = TensorD::from({1, 5}, {3, 3, 3, 3, 3});
  auto y = layer_norm(x, filled_tensor<double>({5}, 1.0), filled_tensor<double>({5}, 0.0));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Kernels, LayerNormNormalizesRows) {
  Rng rng(5);
  auto x = random_matrix(4, 64, rng, 3.0);
  auto y = layer_norm(x, filled_tensor<double>({64}, 1.0), filled_tensor<double>({64}, 0.0));
  for (std::size_t r = 0; r < 4; ++r) {
    double mean = 0, var = 0;
    for (std::size_t c = 0; c < 64; ++c) mean += y.at(r, c);
    mean /= 64;
    for (std::size_t c = 0; c < 64; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
    var /= 64;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-5);
  }
}

TEST(Kernels, CrossEntropyClosedForms) {
  // probability ~1 on gold
  auto sure = cross_entropy(TensorD::from({1, 2}, {200, -200}), std::vector<std::int32_t>{0});
  EXPECT_NEAR(sure.item(), 0.0, 1e-100);
  // uniform logits over C classes
  auto uniform = cross_entropy(TensorD::zeros({3, 7}), std::vector<std::int32_t>{0, 3, 6});
  EXPECT_NEAR(uniform.item(), std::log(7.0), 1e-12);
  // logits [1, 0], gold 0 -> ln(1 + e^-1)
  auto hand = cross_entropy(TensorD::from({1, 2}, {1, 0}), std::vector<std::int32_t>{0});
  EXPECT_NEAR(hand.item(), 0.31326168751822286, 1e-12);
}

TEST(Kernels, CrossEntropyIgnoresMaskedRowsAndRejectsAllIgnored) {
  auto logits = TensorD::from({2, 2}, {1, 0, 50, -50});
  std::vector<std::int32_t> gold{0, 1};
  std::vector<std::uint8_t> ignore{0, 1};
  EXPECT_NEAR(cross_entropy(logits, gold, ignore).item(), 0.31326168751822286, 1e-12);
  std::vector<std::uint8_t> all{1, 1};
  EXPECT_THROW(cross_entropy(logits, gold, all), Error);
}

TEST(Backward, SumGivesOnes) {
  auto w = TensorD::from({3}, {0.5, -1, 2}, true);
  auto loss = sum(w);
  backward(loss);
  for (double g : w.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SumOfSquares) {
  auto w = TensorD::from({2}, {1, 2}, true);
  auto loss = sum(mul(w, w));
  backward(loss);
  EXPECT_EQ(w.grad()[0], 2.0);
  EXPECT_EQ(w.grad()[1], 4.0);
}

TEST(Backward, NonScalarIsRejected) {
  auto w = TensorD::from({2}, {1, 2}, true);
  auto y = mul(w, w);
  EXPECT_THROW(backward(y), Error);
}

TEST(Backward, UnreachableParameterGetsZeroGrad) {
  ParameterSet<double> params;
  auto used = params.add("used", TensorD::from({2}, {1, 2}));
  auto unused = params.add("unused", TensorD::from({2}, {3, 4}));
  params.zero_grad();
  auto loss = sum(used);
  backward(loss);
  for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  auto w = TensorD::from({2}, {1, 2}, true);
  NoGradGuard guard;
  auto y = sum(mul(w, w));
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node()->parents.empty());
}

// ---------------------------------------------------------------------------

AttentionParams<double> random_attention(std::size_t d, Rng& rng) {
  auto w = [&] { return random_matrix(d, d, rng, 0.3, true); };
  auto b = [&] { return random_matrix(1, d, rng, 0.1, true); };
  return {w(), b(), w(), b(), w(), b(), w(), b()};
}

TEST(Attention, OutputShape) {
  Rng rng(1);
  auto p = random_attention(8, rng);
  auto x = random_matrix(4, 8, rng);
  std::vector<std::size_t> lengths{4};
  auto mask = key_padding_mask<double>(lengths, 4, 2);
  auto y = multi_head_attention(x, p, 2, 1, 4, mask, {});
  EXPECT_EQ(y.shape(), (Shape{4, 8}));
}

TEST(Attention, SinglePositionAttendsToItself) {
  Rng rng(2);
  auto p = random_attention(8, rng);
  auto x = random_matrix(1, 8, rng);
  std::vector<std::size_t> lengths{1};
  auto mask = key_padding_mask<double>(lengths, 1, 2);
  TensorD probs;
  multi_head_attention(x, p, 2, 1, 1, mask, {}, 0.0, &probs);
  for (double v : probs.values()) EXPECT_EQ(v, 1.0);
}

TEST(Attention, HeadsMustDivideWidth) {
  Rng rng(2);
  auto p = random_attention(8, rng);
  auto x = random_matrix(2, 8, rng);
  std::vector<std::size_t> lengths{2};
  auto mask = key_padding_mask<double>(lengths, 2, 3);
  EXPECT_THROW(multi_head_attention(x, p, 3, 1, 2, mask, {}), Error);
  EncoderConfig cfg{.hidden_size = 10, .num_heads = 3, .vocab_size = 5};
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Attention, MaskedPositionsAreIgnored) {
  Rng rng(4);
  auto p = random_attention(8, rng);
  // two sequences of length 6 where only the first 3 positions are real
  auto x1 = random_matrix(12, 8, rng);
  auto x2 = x1.clone();
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t t = 3; t < 6; ++t) {
      for (std::size_t c = 0; c < 8; ++c) x2.values()[(b * 6 + t) * 8 + c] = rng.normal(0.0, 5.0);
    }
  }
  std::vector<std::size_t> lengths{3, 3};
  auto mask = key_padding_mask<double>(lengths, 6, 2);
  TensorD probs;
  auto y1 = multi_head_attention(x1, p, 2, 2, 6, mask, {}, 0.0, &probs);
  auto y2 = multi_head_attention(x2, p, 2, 2, 6, mask, {});
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t t = 0; t < 3; ++t) {
      for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(y1.at(b * 6 + t, c), y2.at(b * 6 + t, c));
    }
  }
  for (std::size_t row = 0; row < probs.rows(); ++row) {
    for (std::size_t k = 3; k < 6; ++k) EXPECT_LT(probs.at(row, k), 1e-6);
  }
}

TEST(Encoder, CharColumnShape) {
  Rng rng(7);
  EncoderConfig cfg{.hidden_size = 256, .num_layers = 4, .num_heads = 8, .max_seq_len = 21, .vocab_size = 40};
  TransformerEncoder<float> enc(cfg, "char", rng);
  SequenceBatch batch;
  batch.batch = 1;
  batch.len = 21;
  batch.lengths = {21};
  for (int i = 0; i < 21; ++i) batch.ids.push_back(i % 40);
  auto y = enc.forward(batch, {});
  EXPECT_EQ(y.shape(), (Shape{21, 256}));
}

TEST(Encoder, RejectsOverLongInput) {
  Rng rng(7);
  EncoderConfig cfg{.hidden_size = 8, .num_layers = 1, .num_heads = 2, .max_seq_len = 3, .vocab_size = 5};
  TransformerEncoder<float> enc(cfg, "enc", rng);
  auto batch = SequenceBatch::pack({{1, 2, 3, 4}}, 0);
  EXPECT_THROW(enc.forward(batch, {}), Error);
}

TEST(Encoder, EvalModeIsBitwiseDeterministic) {
  Rng rng(8);
  EncoderConfig cfg{.hidden_size = 16, .num_layers = 2, .num_heads = 4, .max_seq_len = 10, .vocab_size = 12};
  TransformerEncoder<float> enc(cfg, "enc", rng);
  auto batch = SequenceBatch::pack({{1, 2, 3, 4, 5}, {6, 7}}, 0);
  auto a = enc.forward(batch, {});
  auto b = enc.forward(batch, {});
  EXPECT_EQ(a.values(), b.values());
}

TEST(Encoder, PermutationEquivariantWithoutPositions) {
  Rng rng(9);
  EncoderConfig cfg{.hidden_size = 16, .num_layers = 2, .num_heads = 4, .max_seq_len = 10, .vocab_size = 12};
  TransformerEncoder<double> enc(cfg, "enc", rng, 0.3);
  auto original = SequenceBatch::pack({{1, 2, 3, 4, 5}}, 0);
  auto swapped = SequenceBatch::pack({{1, 4, 3, 2, 5}}, 0);
  // with positions, swapping tokens 1 and 3 changes more than a row swap
  {
    auto a = enc.forward(original, {});
    auto b = enc.forward(swapped, {});
    double diff = 0;
    for (std::size_t c = 0; c < 16; ++c) diff += std::abs(a.at(0, c) - b.at(0, c));
    EXPECT_GT(diff, 1e-6);
  }
  for (auto& v : enc.position_embedding().values()) v = 0.0;
  auto a = enc.forward(original, {});
  auto b = enc.forward(swapped, {});
  const std::size_t perm[] = {0, 3, 2, 1, 4};
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t c = 0; c < 16; ++c) EXPECT_NEAR(a.at(t, c), b.at(perm[t], c), 1e-12);
  }
}

// ---------------------------------------------------------------------------

TEST(GradCheck, LinearToyModel) {
  Rng rng(11);
  ParameterSet<double> params;
  auto w = params.add("w", random_matrix(5, 3, rng));
  auto b = params.add("b", random_matrix(1, 3, rng));
  auto x = random_matrix(4, 5, rng);
  std::vector<std::int32_t> gold{0, 2, 1, 2};
  auto report = finite_difference_check<double>(
      params, [&] { return cross_entropy(linear(x, w, b), gold); }, {.tolerance = 1e-7});
  EXPECT_TRUE(report.passed) << report.max_rel_error;
  EXPECT_EQ(report.checked, 18u);
}

TEST(GradCheck, OneLayerEncoder) {
  Rng rng(12);
  EncoderConfig cfg{.hidden_size = 8, .num_layers = 1, .num_heads = 2, .max_seq_len = 6, .dropout = 0.0,
                    .vocab_size = 9};
  TransformerEncoder<double> enc(cfg, "enc", rng, 0.5);
  ParameterSet<double> params = enc.parameters();
  auto head = params.add("head", random_matrix(8, 4, rng, 0.5));
  auto batch = SequenceBatch::pack({{1, 2, 3, 4}, {5, 6}}, 0);
  std::vector<std::size_t> rows{0, 1, 2, 3, 6, 7};
  std::vector<std::int32_t> gold{0, 1, 2, 3, 1, 0};
  auto report = finite_difference_check<double>(params, [&] {
    auto h = gather_rows(enc.forward(batch, {}), rows);
    return cross_entropy(matmul(h, head), gold);
  });
  EXPECT_TRUE(report.passed) << report.worst.parameter << " err " << report.max_rel_error;
  EXPECT_GE(report.checked, 200u);
}

TEST(GradCheck, DetectsCorruptedGradient) {
  Rng rng(13);
  ParameterSet<double> params;
  auto w = params.add("w", random_matrix(5, 3, rng));
  auto x = random_matrix(4, 5, rng);
  std::vector<std::int32_t> gold{0, 2, 1, 2};
  auto report = finite_difference_check<double>(
      params, [&] { return cross_entropy(matmul(x, w), gold); }, {},
      [](ParameterSet<double>& p) { p.entries()[0].tensor.grad()[4] += 0.1; });
  EXPECT_FALSE(report.passed);
  EXPECT_EQ(report.worst.parameter, "w");
}

// ---------------------------------------------------------------------------

TEST(Adam, DefaultLearningRate) { EXPECT_EQ(AdamConfig{}.base_lr, 5e-5); }

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterSet<double> params;
  auto w = params.add("w", TensorD::from({1}, {0.0}));
  Adam<double> opt(params, {.base_lr = 1e-3, .total_steps = 100});
  w.grad()[0] = 1.0;
  ASSERT_TRUE(opt.step(params));
  // m_hat / sqrt(v_hat) = 1 after one step with g = 1
  EXPECT_NEAR(w.values()[0], -1e-3 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, LearningRateDecaysLinearlyToZero) {
  ParameterSet<double> params;
  auto w = params.add("w", TensorD::from({1}, {0.5}));
  Adam<double> opt(params, {.base_lr = 1e-2, .total_steps = 4});
  EXPECT_DOUBLE_EQ(opt.learning_rate(), 1e-2);
  for (int i = 0; i < 4; ++i) {
    w.grad()[0] = 1.0;
    opt.step(params);
  }
  EXPECT_EQ(opt.step_count(), 4u);
  EXPECT_EQ(opt.learning_rate(), 0.0);
  const double before = w.values()[0];
  w.grad()[0] = 1.0;
  opt.step(params);
  EXPECT_EQ(w.values()[0], before);
}

TEST(Adam, SkipsNonFiniteGradients) {
  ParameterSet<double> params;
  auto w = params.add("w", TensorD::from({2}, {1.0, 2.0}));
  Adam<double> opt(params, {.base_lr = 1e-2, .total_steps = 10});
  w.grad()[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(opt.step(params));
  EXPECT_EQ(opt.skipped_steps(), 1u);
  EXPECT_EQ(opt.step_count(), 0u);
  EXPECT_EQ(w.values()[0], 1.0);
}

TEST(Adam, ZeroLearningRateLeavesParametersBitwiseUnchanged) {
  Rng rng(14);
  ParameterSet<float> params;
  auto w = params.add("w", truncated_normal_tensor<float>({16}, 1.0, rng));
  const auto before = w.values();
  Adam<float> opt(params, {.base_lr = 0.0, .total_steps = 10});
  for (int i = 0; i < 5; ++i) {
    for (auto& g : w.grad()) g = static_cast<float>(rng.normal(0, 1));
    opt.step(params);
  }
  EXPECT_EQ(w.values(), before);
}

TEST(Adam, StepOnConvexQuadraticDecreasesLoss) {
  ParameterSet<double> params;
  auto w = params.add("w", TensorD::from({3}, {1.0, -2.0, 0.5}));
  auto target = TensorD::from({3}, {0.2, 0.1, -0.3});
  auto loss_of = [&] {
    auto d = add(w, scale(target, -1.0));
    return sum(mul(d, d));
  };
  Adam<double> opt(params, {.base_lr = 1e-2, .total_steps = 1000});
  double prev = loss_of().item();
  for (int i = 0; i < 20; ++i) {
    params.zero_grad();
    auto loss = loss_of();
    backward(loss);
    opt.step(params);
    const double now = loss_of().item();
    EXPECT_LT(now, prev);
    prev = now;
  }
}

}  // namespace
}  // namespace spellforge::ad
