// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "raft/errors.hpp"
#include "raft/fitting.hpp"
#include "raft/random.hpp"
#include "raft/transformer.hpp"

namespace raft {
namespace {

using DModel = TransformerModel<double>;
using T = Tensor<double>;

TransformerConfig small_config(const ActivationKind& act, int layers = 2, int hidden = 16, int vocab = 20) {
  return TransformerConfig::uniform(layers, hidden, 2, vocab, 16, act);
}

TokenBatch random_batch(SplitMix64& rng, size_t b, size_t l, int vocab) {
  TokenBatch t;
  t.batch_size = b;
  t.seq_len = l;
  for (size_t i = 0; i < b * l; ++i) {
    t.input_ids.push_back(static_cast<int32_t>(5 + rng.below(static_cast<uint64_t>(vocab - 5))));
    t.attention_mask.push_back(1);
  }
  return t;
}

T randn(SplitMix64& rng, Shape shape, double sd = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal(0.0, sd);
  return T::from(std::move(shape), std::move(v));
}

void fill(DModel& m, const std::string& name, double value) {
  T p = m.parameter(name);
  for (auto& v : p.data()) v = value;
}

TEST(TransformerConfigTest, Validation) {
  auto c = small_config(ActivationKind::fixed_gelu());
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.ffn_size, 64);
  auto bad = c;
  bad.num_heads = 3;
  EXPECT_THROW(bad.validate(), PreconditionError);
  bad = c;
  bad.activation.pop_back();
  EXPECT_THROW(bad.validate(), PreconditionError);
  bad = c;
  bad.hidden_size = 0;
  EXPECT_THROW(bad.validate(), PreconditionError);
}

TEST(TransformerConfigTest, JsonRoundTrip) {
  auto c = small_config(ActivationKind::rational(gelu_initialization(), false), 3);
  c.activation[1] = ActivationKind::fixed_relu();
  c.num_classes = 4;
  c.init_scheme = InitScheme::ResidualScaled;
  const auto back = transformer_config_from_json(to_json(c));
  EXPECT_TRUE(back.same_architecture(c));
  EXPECT_EQ(back.activation[0].coeffs, c.activation[0].coeffs);
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_THROW(transformer_config_from_json("{"), FormatError);
  EXPECT_THROW(transformer_config_from_json("{\"num_layers\": 2}"), FormatError);
}

TEST(TransformerConfigTest, SameArchitectureIgnoresCoefficientValues) {
  const auto a = small_config(ActivationKind::rational(gelu_initialization()));
  const auto b = small_config(ActivationKind::rational(RationalCoefficients::identity()));
  const auto g = small_config(ActivationKind::fixed_gelu());
  EXPECT_TRUE(a.same_architecture(b));
  EXPECT_FALSE(a.same_architecture(g));
}

TEST(TransformerConfigTest, TwelveLayersPlusPoolerIsThirteenRafs) {
  const auto c = TransformerConfig::uniform(12, 24, 12, 30, 8, ActivationKind::rational(gelu_initialization()));
  EXPECT_EQ(c.num_rafs(), 13u);
  const TransformerModel<float> m(c, 0);
  EXPECT_EQ(m.raf_names().size(), 13u);
  EXPECT_EQ(m.raf_names().back(), "pooler.raf");
}

TEST(TransformerModelTest, EncodeShape) {
  SplitMix64 rng(1);
  const DModel m(small_config(ActivationKind::fixed_gelu(), 2, 64), 3);
  const auto out = m.encode(random_batch(rng, 2, 16, 20));
  EXPECT_EQ(out.hidden_states.shape(), (Shape{2, 16, 64}));
}

TEST(TransformerModelTest, DeterministicInitAndActivationIndependentWeights) {
  const DModel a(small_config(ActivationKind::fixed_gelu()), 9);
  const DModel b(small_config(ActivationKind::fixed_gelu()), 9);
  const DModel r(small_config(ActivationKind::rational(gelu_initialization())), 9);
  const DModel other(small_config(ActivationKind::fixed_gelu()), 10);
  for (const auto& [name, t] : a.parameters()) {
    EXPECT_EQ(t.values(), b.parameter(name).values()) << name;
    EXPECT_EQ(t.values(), r.parameter(name).values()) << name;
  }
  EXPECT_NE(a.parameter("embeddings.word").values(), other.parameter("embeddings.word").values());
}

TEST(TransformerModelTest, ResidualScaledInitShrinksResidualBranches) {
  auto c = small_config(ActivationKind::fixed_gelu(), 8);
  const DModel standard(c, 4);
  c.init_scheme = InitScheme::ResidualScaled;
  const DModel scaled(c, 4);
  const double factor = 1.0 / std::sqrt(16.0);
  for (const char* name : {"layer.3.attn.output.weight", "layer.5.ffn.w2.weight"}) {
    const auto& a = standard.parameter(name).values();
    const auto& b = scaled.parameter(name).values();
    for (size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], a[i] * factor, 1e-15);
  }
  EXPECT_EQ(standard.parameter("layer.3.ffn.w1.weight").values(), scaled.parameter("layer.3.ffn.w1.weight").values());
}

TEST(TransformerModelTest, ZeroFfnWeightsGiveLayerNormOfInput) {
  SplitMix64 rng(2);
  DModel m(small_config(ActivationKind::rational(gelu_initialization())), 1);
  fill(m, "layer.0.ffn.w1.weight", 0.0);
  fill(m, "layer.0.ffn.w2.weight", 0.0);
  const T x = randn(rng, {2, 3, 16});
  const T got = m.ffn_forward(x, 0);
  const T want = layer_norm(x, T::full({16}, 1.0), T::zeros({16}), 1e-12);
  for (size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data()[i], want.data()[i], 1e-12);
}

TEST(TransformerModelTest, IdentityRationalIsLinearFfn) {
  SplitMix64 rng(3);
  const DModel m(small_config(ActivationKind::rational(RationalCoefficients::identity())), 5);
  const T x = randn(rng, {4, 16});
  const T got = m.ffn_branch(x, 1);
  // Explicit composition: (x W1 + b1) W2 + b2.
  const T h = add_bias(matmul(x, m.parameter("layer.1.ffn.w1.weight")), m.parameter("layer.1.ffn.w1.bias"));
  const T want = add_bias(matmul(h, m.parameter("layer.1.ffn.w2.weight")), m.parameter("layer.1.ffn.w2.bias"));
  for (size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data()[i], want.data()[i], 1e-14);
}

TEST(TransformerModelTest, GeluFitRationalTracksFixedGelu) {
  SplitMix64 rng(4);
  const DModel g(small_config(ActivationKind::fixed_gelu()), 6);
  const DModel r(small_config(ActivationKind::rational(gelu_initialization())), 6);
  std::vector<double> xs;
  for (int i = 0; i <= 600; ++i) xs.push_back(-3.0 + 0.01 * i);
  const T x = T::from({xs.size()}, xs);
  const T ag = g.activation(x, 0), ar = r.activation(x, 0);
  for (size_t i = 0; i < xs.size(); ++i) EXPECT_LE(std::abs(ag.data()[i] - ar.data()[i]), 1e-2);

  const T h = randn(rng, {3, 16});
  const T bg = g.ffn_branch(h, 0), br = r.ffn_branch(h, 0);
  for (size_t i = 0; i < bg.size(); ++i) EXPECT_LE(std::abs(bg.data()[i] - br.data()[i]), 1e-2);

  const auto batch = random_batch(rng, 2, 10, 20);
  const T eg = g.encode(batch).hidden_states, er = r.encode(batch).hidden_states;
  for (size_t i = 0; i < eg.size(); ++i) EXPECT_LE(std::abs(eg.data()[i] - er.data()[i]), 5e-2);
}

TEST(TransformerModelTest, PaddingDoesNotLeakIntoRealPositions) {
  SplitMix64 rng(5);
  const DModel m(small_config(ActivationKind::fixed_gelu()), 7);
  auto batch = random_batch(rng, 1, 6, 20);
  batch.attention_mask = {1, 1, 1, 1, 0, 0};
  const T a = m.encode(batch).hidden_states;
  batch.input_ids[4] = 17;
  batch.input_ids[5] = 0;
  const T b = m.encode(batch).hidden_states;
  for (size_t i = 0; i < 4 * 16; ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-14);
}

TEST(TransformerModelTest, PermutingTokensChangesOutputs) {
  SplitMix64 rng(6);
  const DModel m(small_config(ActivationKind::fixed_gelu()), 8);
  auto batch = random_batch(rng, 1, 5, 20);
  batch.input_ids = {5, 6, 7, 8, 9};
  const T a = m.encode(batch).hidden_states;
  batch.input_ids = {9, 8, 7, 6, 5};
  const T b = m.encode(batch).hidden_states;
  // Token 7 sits at position 2 in both; only positions and context differ.
  double diff = 0;
  for (size_t i = 2 * 16; i < 3 * 16; ++i) diff += std::abs(a.data()[i] - b.data()[i]);
  EXPECT_GT(diff, 1e-6);
}

TEST(TransformerModelTest, RejectsBadIdsAndLengths) {
  SplitMix64 rng(7);
  const DModel m(small_config(ActivationKind::fixed_gelu()), 8);
  auto batch = random_batch(rng, 1, 4, 20);
  batch.input_ids[2] = 20;
  EXPECT_THROW(m.encode(batch), DomainError);
  EXPECT_THROW(m.encode(random_batch(rng, 1, 17, 20)), PreconditionError);
}

TEST(MlmLoss, ZeroLogitsGiveLogVocab) {
  SplitMix64 rng(8);
  DModel m(small_config(ActivationKind::fixed_gelu()), 1);
  fill(m, "embeddings.word", 0.0);
  MaskedBatch b;
  b.tokens = random_batch(rng, 2, 8, 20);
  b.labels.assign(16, kIgnoreLabel);
  b.labels[3] = 7;
  b.labels[12] = 19;
  EXPECT_NEAR(m.mlm_loss(b).item(), std::log(20.0), 1e-12);
}

TEST(MlmLoss, SmallRandomLogitsNearLogVocab) {
  SplitMix64 rng(9);
  auto c = small_config(ActivationKind::fixed_gelu(), 1, 16, 200);
  c.init_std = 0.002;
  const DModel m(c, 2);
  MaskedBatch b;
  b.tokens = random_batch(rng, 8, 16, 200);
  for (size_t i = 0; i < b.tokens.input_ids.size(); ++i) b.labels.push_back(static_cast<int32_t>(rng.below(200)));
  EXPECT_NEAR(m.mlm_loss(b).item(), std::log(200.0), 0.05 * std::log(200.0));
}

TEST(MlmLoss, PeakedCorrectLogitGivesNearZeroLoss) {
  SplitMix64 rng(10);
  DModel m(small_config(ActivationKind::fixed_gelu()), 1);
  T bias = m.parameter("mlm.bias");
  bias.data()[11] = 100.0;
  MaskedBatch b;
  b.tokens = random_batch(rng, 1, 6, 20);
  b.labels.assign(6, kIgnoreLabel);
  b.labels[2] = 11;
  EXPECT_LT(m.mlm_loss(b).item(), 1e-30 + 1e-20);
}

TEST(MlmLoss, MatchesHandComputedCrossEntropy) {
  SplitMix64 rng(11);
  const DModel m(small_config(ActivationKind::fixed_gelu()), 12);
  MaskedBatch b;
  b.tokens = random_batch(rng, 1, 6, 20);
  b.labels.assign(6, kIgnoreLabel);
  b.labels[1] = 9;
  b.labels[4] = 15;
  const T logits = m.mlm_logits(b.tokens);
  double want = 0;
  for (size_t row : {1u, 4u}) {
    double mx = -1e300, z = 0;
    for (size_t v = 0; v < 20; ++v) mx = std::max(mx, logits.data()[row * 20 + v]);
    for (size_t v = 0; v < 20; ++v) z += std::exp(logits.data()[row * 20 + v] - mx);
    want += mx + std::log(z) - logits.data()[row * 20 + static_cast<size_t>(b.labels[row])];
  }
  EXPECT_NEAR(m.mlm_loss(b).item(), want / 2, 1e-12);
}

TEST(MlmLoss, NoMaskedPositionIsUndefined) {
  SplitMix64 rng(12);
  const DModel m(small_config(ActivationKind::fixed_gelu()), 1);
  MaskedBatch b;
  b.tokens = random_batch(rng, 1, 4, 20);
  b.labels.assign(4, kIgnoreLabel);
  EXPECT_THROW(m.mlm_loss(b), UndefinedLossError);
}

TEST(Classify, ZeroHeadGivesUniformLogits) {
  SplitMix64 rng(13);
  auto c = small_config(ActivationKind::rational(gelu_initialization()));
  c.num_classes = 2;
  DModel m(c, 1);
  fill(m, "classifier.weight", 0.0);
  const auto batch = random_batch(rng, 3, 5, 20);
  const std::vector<int32_t> labels{0, 1, 1};
  const auto out = m.classify(batch, labels);
  EXPECT_EQ(out.logits.shape(), (Shape{3, 2}));
  for (double v : out.logits.values()) EXPECT_EQ(v, 0.0);
  EXPECT_NEAR(out.loss->item(), std::log(2.0), 1e-15);
  EXPECT_THROW(m.classify(batch, std::vector<int32_t>{0, 2, 1}), DomainError);
  EXPECT_FALSE(m.classify(batch).loss.has_value());
}

TEST(Classify, RequiresHead) {
  SplitMix64 rng(14);
  DModel m(small_config(ActivationKind::fixed_gelu()), 1);
  EXPECT_FALSE(m.has_classifier());
  EXPECT_THROW(m.classify(random_batch(rng, 1, 3, 20)), PreconditionError);
  m.attach_classifier(3, 5);
  EXPECT_EQ(m.classify(random_batch(rng, 2, 3, 20)).logits.shape(), (Shape{2, 3}));
}

TEST(GradientFlow, TrainableVsFrozenRationals) {
  SplitMix64 rng(15);
  for (bool trainable : {true, false}) {
    auto c = small_config(ActivationKind::rational(gelu_initialization(), trainable));
    c.num_classes = 2;
    DModel m(c, 3);
    backward(*m.classify(random_batch(rng, 2, 6, 20), std::vector<int32_t>{0, 1}).loss);
    for (const auto& name : m.raf_names()) {
      const T p = m.parameter(name);
      if (trainable) {
        double norm = 0;
        for (double g : p.grad()) norm += std::abs(g);
        EXPECT_GT(norm, 0.0) << name;
      } else {
        EXPECT_FALSE(p.has_grad()) << name;
      }
    }
  }
}

TEST(ModelCopy, CloneIsDeepAndCopyChecksArchitecture) {
  DModel a(small_config(ActivationKind::rational(gelu_initialization())), 1);
  DModel b = a.clone();
  fill(b, "layer.0.ffn.raf", 0.5);
  EXPECT_NE(a.parameter("layer.0.ffn.raf").values(), b.parameter("layer.0.ffn.raf").values());
  a.copy_parameters_from(b);
  EXPECT_EQ(a.parameter("layer.0.ffn.raf").values(), b.parameter("layer.0.ffn.raf").values());
  TransformerModel<float> g(small_config(ActivationKind::fixed_gelu()), 1);
  EXPECT_THROW(g.copy_parameters_from(a), ConfigMismatchError);
  EXPECT_THROW(a.parameter("nope"), PreconditionError);
}

TEST(ModelCopy, RationalCoefficientsReadBack) {
  const DModel m(small_config(ActivationKind::rational(gelu_initialization())), 1);
  EXPECT_EQ(m.rational_coefficients("layer.1.ffn.raf"), gelu_initialization());
  EXPECT_THROW(m.rational_coefficients("layer.0.ffn.w1.weight"), PreconditionError);
}

}  // namespace
}  // namespace raft
