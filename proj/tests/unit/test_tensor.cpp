// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "raft/errors.hpp"
#include "raft/gradcheck.hpp"
#include "raft/random.hpp"
#include "raft/rational.hpp"
#include "raft/tensor.hpp"

namespace raft {
namespace {

using T = Tensor<double>;

T randn(SplitMix64& rng, Shape shape, bool grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal();
  return T::from(std::move(shape), std::move(v), grad);
}

void expect_values(const T& t, const std::vector<double>& want, double tol = 1e-12) {
  ASSERT_EQ(t.size(), want.size());
  for (size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(t.data()[i], want[i], tol) << "index " << i;
}

TEST(TensorBasics, ConstructionAndShape) {
  const auto z = T::zeros({2, 3});
  EXPECT_EQ(z.shape(), (Shape{2, 3}));
  EXPECT_EQ(z.size(), 6u);
  EXPECT_EQ(shape_string(z.shape()), "(2, 3)");
  EXPECT_THROW(T::from({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_EQ(T::scalar(4.5).item(), 4.5);
  EXPECT_THROW(z.item(), ShapeError);
  EXPECT_EQ(T::full({3}, 2.0).values(), (std::vector<double>{2, 2, 2}));
}

TEST(TensorBasics, NoGradTensorsHoldNoGradStorage) {
  SplitMix64 rng(1);
  const auto a = randn(rng, {3, 3});
  const auto b = randn(rng, {3, 3});
  const auto c = matmul(a, b);
  EXPECT_FALSE(a.has_grad());
  EXPECT_FALSE(c.requires_grad());
  EXPECT_FALSE(c.has_grad());
  EXPECT_EQ(c.op(), OpKind::MatMul);
  EXPECT_TRUE(c.node()->inputs.empty());
  auto leaf = randn(rng, {2}, true);
  EXPECT_FALSE(leaf.has_grad());  // allocated on first use
  leaf.zero_grad();
  EXPECT_TRUE(leaf.has_grad());
  leaf.set_requires_grad(false);
  EXPECT_FALSE(leaf.has_grad());
}

TEST(TensorBasics, SetRequiresGradOnlyOnLeaves) {
  auto a = T::zeros({2}, true);
  auto b = add(a, a);
  EXPECT_THROW(b.set_requires_grad(false), PreconditionError);
}

TEST(MatMul, IdentityAndHandArithmetic) {
  SplitMix64 rng(2);
  const auto m = randn(rng, {3, 3});
  const auto eye = T::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  expect_values(matmul(eye, m), m.values(), 0.0);
  const auto a = T::from({2, 2}, {1, 2, 3, 4});
  const auto b = T::from({2, 1}, {1, 1});
  expect_values(matmul(a, b), {3, 7}, 0.0);
  expect_values(matmul(a, T::from({1, 2}, {1, 1}), true), {3, 7}, 0.0);
  EXPECT_THROW(matmul(a, T::zeros({3, 1})), ShapeError);
}

TEST(MatMul, GradientOfSumMatchesClosedForm) {
  // d sum(A B) / dA = 1 B^T, d / dB = A^T 1.
  SplitMix64 rng(3);
  auto a = randn(rng, {2, 3}, true);
  auto b = randn(rng, {3, 4}, true);
  backward(sum(matmul(a, b)));
  for (size_t i = 0; i < 2; ++i)
    for (size_t k = 0; k < 3; ++k) {
      double want = 0;
      for (size_t j = 0; j < 4; ++j) want += b.data()[k * 4 + j];
      EXPECT_NEAR(a.grad()[i * 3 + k], want, 1e-12);
    }
  for (size_t k = 0; k < 3; ++k)
    for (size_t j = 0; j < 4; ++j)
      EXPECT_NEAR(b.grad()[k * 4 + j], a.data()[k] + a.data()[3 + k], 1e-12);
}

TEST(Bmm, MatchesPerBatchMatMul) {
  SplitMix64 rng(4);
  const auto a = randn(rng, {2, 3, 4});
  const auto b = randn(rng, {2, 4, 5});
  const auto c = bmm(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 3, 5}));
  for (size_t n = 0; n < 2; ++n) {
    const auto an = T::from({3, 4}, std::vector<double>(a.data().begin() + n * 12, a.data().begin() + (n + 1) * 12));
    const auto bn = T::from({4, 5}, std::vector<double>(b.data().begin() + n * 20, b.data().begin() + (n + 1) * 20));
    const auto cn = matmul(an, bn);
    for (size_t i = 0; i < 15; ++i) EXPECT_NEAR(c.data()[n * 15 + i], cn.data()[i], 1e-12);
  }
}

TEST(LayerNorm, HandExamples) {
  const auto one = T::full({2}, 1.0);
  const auto zero = T::zeros({2});
  expect_values(layer_norm(T::from({1, 2}, {1, 3}), one, zero), {-1, 1}, 1e-9);
  expect_values(layer_norm(T::full({2, 3}, 5.0), T::full({3}, 1.0), T::zeros({3})), {0, 0, 0, 0, 0, 0}, 0.0);
  expect_values(layer_norm(T::from({1, 2}, {1, 3}), T::from({2}, {2, 3}), T::from({2}, {0.5, -1})), {-1.5, 2}, 1e-9);
  EXPECT_THROW(layer_norm(T::zeros({2, 3}), T::zeros({2}), T::zeros({3})), ShapeError);
}

TEST(LayerNorm, OutputHasZeroMeanUnitVariance) {
  SplitMix64 rng(5);
  const auto x = randn(rng, {4, 16});
  const auto y = layer_norm(x, T::full({16}, 1.0), T::zeros({16}));
  for (size_t r = 0; r < 4; ++r) {
    double s = 0, s2 = 0;
    for (size_t c = 0; c < 16; ++c) s += y.data()[r * 16 + c];
    for (size_t c = 0; c < 16; ++c) s2 += std::pow(y.data()[r * 16 + c] - s / 16, 2);
    EXPECT_NEAR(s / 16, 0.0, 1e-12);
    EXPECT_NEAR(s2 / 16, 1.0, 1e-9);
  }
}

TEST(Softmax, UniformLogitsAndRows) {
  expect_values(softmax(T::full({2, 4}, 3.0)), std::vector<double>(8, 0.25));
  const auto s = softmax(T::from({1, 3}, {1, 2, 3}));
  const double z = std::exp(1) + std::exp(2) + std::exp(3);
  expect_values(s, {std::exp(1) / z, std::exp(2) / z, std::exp(3) / z});
  // Large logits do not overflow.
  expect_values(softmax(T::from({1, 2}, {1000, 1000})), {0.5, 0.5});
}

TEST(MaskKeys, MaskedPositionsGetNoWeight) {
  // batch 1, heads 1, 2 queries over 3 keys; key 1 masked.
  const std::vector<uint8_t> mask{1, 0, 1};
  const auto p = softmax(mask_keys(T::full({1, 2, 3}, 0.7), mask, 1, 1));
  expect_values(p, {0.5, 0, 0.5, 0.5, 0, 0.5});
  const auto all_masked = softmax(mask_keys(T::zeros({1, 1, 3}), std::vector<uint8_t>{0, 0, 0}, 1, 1));
  expect_values(all_masked, {0, 0, 0});
  EXPECT_THROW(mask_keys(T::zeros({1, 1, 3}), std::vector<uint8_t>{1, 1}, 1, 1), ShapeError);
}

TEST(Activations, FixedValues) {
  expect_values(gelu(T::from({3}, {0, 1, -1})), {0, 0.8413447460685429, -0.15865525393145707}, 1e-15);
  expect_values(relu(T::from({3}, {-2, 0, 2})), {0, 0, 2}, 0.0);
}

TEST(Rational, TensorOpMatchesScalarAndSumsCoefficientGrads) {
  SplitMix64 rng(6);
  auto x = randn(rng, {2, 3}, true);
  std::vector<double> flat{0.1, 0.9, 0.3, -0.05, 0.01, 0.002, 0.4, 0.2, -0.1, 0.05};
  auto c = T::from({10}, flat, true);
  const auto y = rational(x, c, 5, 4);
  const auto coeffs = RationalCoefficients::from_flat(5, 4, flat);
  std::vector<double> want_grad(10, 0.0);
  for (size_t i = 0; i < 6; ++i) {
    const auto e = rational_backward(x.data()[i], coeffs);
    EXPECT_NEAR(y.data()[i], e.value, 1e-15);
    for (size_t j = 0; j < 6; ++j) want_grad[j] += e.d_numerator[j];
    for (size_t k = 0; k < 4; ++k) want_grad[6 + k] += e.d_denominator[k];
  }
  backward(sum(y));
  for (size_t j = 0; j < 10; ++j) EXPECT_NEAR(c.grad()[j], want_grad[j], 1e-12);
  EXPECT_THROW(rational(x, T::zeros({9}), 5, 4), ShapeError);
}

TEST(Embedding, LooksUpRowsAndRejectsBadIds) {
  const auto table = T::from({3, 2}, {0, 1, 10, 11, 20, 21});
  expect_values(embedding(table, std::vector<int32_t>{2, 0, 2}), {20, 21, 0, 1, 20, 21}, 0.0);
  EXPECT_THROW(embedding(table, std::vector<int32_t>{3}), DomainError);
  EXPECT_THROW(embedding(table, std::vector<int32_t>{-1}), DomainError);
}

TEST(TransposeReshape, Layout) {
  const auto x = T::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto t = transpose(x, 0, 1);
  EXPECT_EQ(t.shape(), (Shape{3, 2}));
  expect_values(t, {1, 4, 2, 5, 3, 6}, 0.0);
  const auto r = reshape(x, {3, 2});
  expect_values(r, {1, 2, 3, 4, 5, 6}, 0.0);
  EXPECT_THROW(reshape(x, {4, 2}), ShapeError);
  EXPECT_THROW(transpose(x, 0, 2), ShapeError);
}

TEST(CrossEntropy, HandComputedAndIgnoreIndex) {
  const auto logits = T::from({2, 3}, {1, 2, 3, 0, 0, 0});
  const double lse0 = std::log(std::exp(1) + std::exp(2) + std::exp(3));
  EXPECT_NEAR(cross_entropy(logits, std::vector<int32_t>{2, 1}).item(), 0.5 * ((lse0 - 3) + std::log(3.0)), 1e-12);
  EXPECT_NEAR(cross_entropy(logits, std::vector<int32_t>{kIgnoreIndex, 1}).item(), std::log(3.0), 1e-12);
  EXPECT_THROW(cross_entropy(logits, std::vector<int32_t>{kIgnoreIndex, kIgnoreIndex}), UndefinedLossError);
  EXPECT_THROW(cross_entropy(logits, std::vector<int32_t>{3, 0}), DomainError);
  EXPECT_THROW(cross_entropy(logits, std::vector<int32_t>{0}), ShapeError);
}

TEST(Backward, SumGivesOnes) {
  auto x = T::from({2, 2}, {1, -2, 3, 0.5}, true);
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareGivesTwoX) {
  auto x = T::from({3}, {1, -2, 3}, true);
  backward(sum(mul(x, x)));
  expect_values(T::from({3}, std::vector<double>(x.grad().begin(), x.grad().end())), {2, -4, 6}, 0.0);
}

TEST(Backward, FanOutAccumulates) {
  auto x = T::from({2}, {1, 2}, true);
  const auto y = add(mul(x, x), scale(x, 3.0));  // x used three times
  backward(sum(y));
  EXPECT_EQ(x.grad()[0], 5.0);
  EXPECT_EQ(x.grad()[1], 7.0);
}

TEST(Backward, LeafGradsAccumulateAcrossCalls) {
  auto x = T::from({1}, {2}, true);
  backward(sum(x));
  backward(sum(x));
  EXPECT_EQ(x.grad()[0], 2.0);
  x.zero_grad();
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(Backward, NonScalarLossRejected) {
  auto x = T::zeros({2}, true);
  EXPECT_THROW(backward(add(x, x)), PreconditionError);
}

TEST(Backward, Deterministic) {
  auto run = [] {
    SplitMix64 rng(7);
    auto a = randn(rng, {4, 5}, true);
    auto b = randn(rng, {5, 3}, true);
    backward(mean(softmax(matmul(a, b))));
    return std::vector<double>(a.grad().begin(), a.grad().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(NoGradGuardTest, SuppressesTape) {
  auto x = T::zeros({2}, true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(NoGradGuard::grad_enabled());
    EXPECT_FALSE(add(x, x).requires_grad());
  }
  EXPECT_TRUE(NoGradGuard::grad_enabled());
  EXPECT_TRUE(add(x, x).requires_grad());
}

TEST(Gradcheck, EveryOpPassesTwentyInstances) {
  GradcheckOptions opts;
  opts.seed = 42;
  for (const auto& r : gradcheck_ops(opts)) {
    EXPECT_GE(r.instances, 20u) << r.name;
    EXPECT_TRUE(r.passed()) << r.name << " max rel err " << r.max_rel_error << " at " << r.worst;
  }
}

}  // namespace
}  // namespace raft
