// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "raft/errors.hpp"
#include "raft/fitting.hpp"
#include "raft/random.hpp"
#include "raft/rational.hpp"

namespace raft {
namespace {

// Independent oracle: power sums with std::pow, no Horner.
struct Naive {
  double p = 0, s = 0, q = 0, f = 0;
  double abs_p = 0, abs_s = 0;  // sum of |term|, the rounding scale
};

Naive naive(double x, const RationalCoefficients& c) {
  Naive r;
  for (size_t j = 0; j < c.numerator.size(); ++j) {
    const double t = c.numerator[j] * std::pow(x, static_cast<double>(j));
    r.p += t;
    r.abs_p += std::abs(t);
  }
  for (size_t k = 0; k < c.denominator.size(); ++k) {
    const double t = c.denominator[k] * std::pow(x, static_cast<double>(k + 1));
    r.s += t;
    r.abs_s += std::abs(t);
  }
  r.q = 1.0 + std::abs(r.s);
  r.f = r.p / r.q;
  return r;
}

RationalCoefficients random_coeffs(SplitMix64& rng, int m = 5, int n = 4, double scale = 1.0) {
  RationalCoefficients c;
  for (int j = 0; j <= m; ++j) c.numerator.push_back(rng.normal(0.0, scale));
  for (int k = 0; k < n; ++k) c.denominator.push_back(rng.normal(0.0, scale));
  return c;
}

double sgn(double v) { return (v > 0) - (v < 0); }

TEST(RationalForward, ZeroInputGivesA0) {
  SplitMix64 rng(1);
  for (int i = 0; i < 10; ++i) {
    const auto c = random_coeffs(rng);
    EXPECT_EQ(rational_forward(0.0, c), c.numerator[0]);
  }
}

TEST(RationalForward, IdentityConfiguration) {
  const RationalCoefficients id{{0, 1, 0, 0, 0, 0}, {0, 0, 0, 0}};
  EXPECT_EQ(id, RationalCoefficients::identity());
  EXPECT_EQ(rational_forward(2.5, id), 2.5);
  for (double x : {-1e6, -3.25, -1e-300, 0.0, 7.0, 1e300}) EXPECT_EQ(rational_forward(x, id), x);
}

TEST(RationalForward, HandComputedValue) {
  // P(2) = 1 + 2*2 - 0.5*4 = 3, S(2) = -1*2 + 0.25*4 = -1, Q = 2.
  const RationalCoefficients c{{1, 2, -0.5}, {-1, 0.25}};
  EXPECT_DOUBLE_EQ(rational_forward(2.0, c), 1.5);
}

TEST(RationalForward, GeluFitCloseAtCheckpoints) {
  const auto& c = gelu_initialization();
  for (double x : {-3.0, -1.0, 0.0, 1.0, 3.0}) EXPECT_LE(std::abs(rational_forward(x, c) - gelu_exact(x)), 1e-2) << x;
}

TEST(RationalForward, RejectsNonFinite) {
  const auto id = RationalCoefficients::identity();
  EXPECT_THROW(rational_forward(std::nan(""), id), DomainError);
  EXPECT_THROW(rational_forward(std::numeric_limits<double>::infinity(), id), DomainError);
  auto bad = id;
  bad.denominator[2] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(rational_forward(1.0, bad), DomainError);
  bad = id;
  bad.numerator[0] = std::nan("");
  EXPECT_THROW(rational_backward(1.0, bad), DomainError);
  EXPECT_THROW((RationalCoefficients{{}, {1.0}}.validate()), DomainError);
}

TEST(RationalForward, HornerMatchesNaiveWithin8Ulps) {
  // Both evaluations carry rounding error proportional to the sum of
  // absolute terms, so the ulp is taken at that scale.
  SplitMix64 rng(2);
  const double eps = std::numeric_limits<double>::epsilon();
  for (int i = 0; i < 20000; ++i) {
    const auto c = random_coeffs(rng);
    const double x = rng.uniform(-5.0, 5.0);
    const Naive n = naive(x, c);
    const double scale = (n.abs_p + std::abs(n.f) * n.abs_s) / n.q;
    ASSERT_LE(std::abs(rational_forward(x, c) - n.f), 8 * eps * scale) << "x=" << x;
  }
}

TEST(RationalForward, DenominatorSafety) {
  SplitMix64 rng(3);
  for (int i = 0; i < 100000; ++i) {
    const auto c = random_coeffs(rng, 5, 4, 10.0);
    const double x = rng.uniform(-100.0, 100.0);
    const double f = rational_forward(x, c);
    const Naive n = naive(x, c);
    ASSERT_GE(n.q, 1.0);
    ASSERT_TRUE(std::isfinite(f));
  }
}

TEST(RationalForward, ContinuousAcrossDenominatorRoot) {
  const RationalCoefficients c{{0.3, -1.0, 0.5}, {-1.0, 1.0}};
  // S(x) = -x + x^2 = x (x - 1): |S| kinks at 0 and 1, F stays continuous.
  for (double root : {0.0, 1.0}) {
    const double left = rational_forward(root - 1e-9, c);
    const double right = rational_forward(root + 1e-9, c);
    EXPECT_NEAR(left, right, 1e-8);
    EXPECT_NEAR(rational_forward(root, c), left, 1e-8);
  }
}

TEST(RationalBackward, IdentityHasUnitSlope) {
  const auto id = RationalCoefficients::identity();
  for (double x : {-4.0, -0.5, 0.0, 0.5, 9.0}) EXPECT_EQ(rational_backward(x, id).d_input, 1.0);
}

TEST(RationalBackward, AtZero) {
  SplitMix64 rng(4);
  const auto c = random_coeffs(rng);
  const auto e = rational_backward(0.0, c);
  EXPECT_EQ(e.d_numerator, (std::vector<double>{1, 0, 0, 0, 0, 0}));
  EXPECT_EQ(e.d_denominator, (std::vector<double>{0, 0, 0, 0}));
  // sign(S(0)) = 0, so the slope is the numerator's.
  EXPECT_EQ(e.d_input, c.numerator[1]);
}

TEST(RationalBackward, ClosedFormAgainstFormula) {
  SplitMix64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto c = random_coeffs(rng);
    const double x = rng.uniform(-5.0, 5.0);
    const Naive n = naive(x, c);
    double dp = 0, ds = 0;
    for (size_t j = 1; j < c.numerator.size(); ++j) dp += j * c.numerator[j] * std::pow(x, j - 1.0);
    for (size_t k = 0; k < c.denominator.size(); ++k) ds += (k + 1) * c.denominator[k] * std::pow(x, double(k));
    const double dq = sgn(n.s) * ds;
    const auto e = rational_backward(x, c);
    EXPECT_NEAR(e.value, n.f, 1e-12 * (1 + std::abs(n.f)));
    EXPECT_NEAR(e.d_input, (dp * n.q - n.p * dq) / (n.q * n.q), 1e-9 * (1 + std::abs(e.d_input)));
    for (size_t j = 0; j < c.numerator.size(); ++j)
      EXPECT_NEAR(e.d_numerator[j], std::pow(x, double(j)) / n.q, 1e-9 * (1 + std::abs(e.d_numerator[j])));
    for (size_t k = 0; k < c.denominator.size(); ++k)
      EXPECT_NEAR(e.d_denominator[k], -n.p * sgn(n.s) * std::pow(x, k + 1.0) / (n.q * n.q),
                  1e-9 * (1 + std::abs(e.d_denominator[k])));
  }
}

TEST(RationalBackward, MatchesCentralDifferences) {
  SplitMix64 rng(6);
  const double h = 1e-5;
  auto rel = [](double a, double f) {
    return std::abs(a - f) <= 1e-8 ? 0.0 : std::abs(a - f) / std::max(std::abs(a), std::abs(f));
  };
  int checked = 0;
  while (checked < 200) {
    const auto c = random_coeffs(rng);
    const double x = rng.uniform(-5.0, 5.0);
    if (std::abs(naive(x, c).s) < 1e-3) continue;  // keep the kink out of the stencil
    const auto e = rational_backward(x, c);
    const double fd = (rational_forward(x + h, c) - rational_forward(x - h, c)) / (2 * h);
    EXPECT_LE(rel(e.d_input, fd), 1e-5);
    auto flat = c.flat();
    for (size_t i = 0; i < flat.size(); ++i) {
      // Step scaled by the monomial so high powers of |x| do not inflate truncation error.
      const int degree = i < 6 ? static_cast<int>(i) : static_cast<int>(i) - 5;
      const double hi = h / std::max(1.0, std::pow(std::abs(x), degree));
      auto up = flat, down = flat;
      up[i] += hi;
      down[i] -= hi;
      const double num = (rational_forward(x, RationalCoefficients::from_flat(5, 4, up)) -
                          rational_forward(x, RationalCoefficients::from_flat(5, 4, down))) /
                         (2 * hi);
      const double an = i < 6 ? e.d_numerator[i] : e.d_denominator[i - 6];
      EXPECT_LE(rel(an, num), 1e-5) << "coefficient " << i;
    }
    ++checked;
  }
}

TEST(RationalBackward, GeluFitSlopeAtOne) {
  const auto& c = gelu_initialization();
  const double h = 1e-5;
  const double fd = (rational_forward(1.0 + h, c) - rational_forward(1.0 - h, c)) / (2 * h);
  const double an = rational_backward(1.0, c).d_input;
  EXPECT_LE(std::abs(an - fd) / std::abs(fd), 1e-5);
}

TEST(RationalBatch, MatchesScalarLoop) {
  SplitMix64 rng(7);
  const auto c = random_coeffs(rng);
  std::vector<double> xs(100);
  for (auto& x : xs) x = rng.uniform(-5, 5);
  const auto ys = rational_forward_batch(xs, c);
  ASSERT_EQ(ys.size(), xs.size());
  for (size_t i = 0; i < xs.size(); ++i) EXPECT_EQ(ys[i], rational_forward(xs[i], c));
}

TEST(RationalBatch, SmallExamples) {
  RationalCoefficients c{{0.5, 1, 0, 0, 0, 0}, {1, 0, 0, 0}};
  EXPECT_EQ(rational_forward_batch(std::vector<double>{0, 0}, c), (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(rational_forward_batch(std::vector<double>{-1, 0, 2}, RationalCoefficients::identity()),
            (std::vector<double>{-1, 0, 2}));
  EXPECT_TRUE(rational_forward_batch(std::vector<double>{}, c).empty());
  EXPECT_THROW(rational_forward_batch(std::vector<double>{1.0, std::nan("")}, c), DomainError);
}

TEST(RationalKernel, AccumulateAddsScaledGradients) {
  SplitMix64 rng(8);
  const auto c = random_coeffs(rng);
  std::vector<double> dn(6, 1.0), dd(4, -1.0);
  const double x = 0.7, up = 2.5;
  const double dx = kernel::accumulate(x, up, c.numerator, c.denominator, dn, dd);
  const auto e = rational_backward(x, c);
  EXPECT_DOUBLE_EQ(dx, e.d_input);
  for (size_t j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(dn[j], 1.0 + up * e.d_numerator[j]);
  for (size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(dd[k], -1.0 + up * e.d_denominator[k]);
  EXPECT_DOUBLE_EQ(kernel::value(x, c.numerator, c.denominator), e.value);
}

TEST(RationalCoefficientsTest, FlatRoundTrip) {
  SplitMix64 rng(9);
  const auto c = random_coeffs(rng, 3, 2);
  EXPECT_EQ(c.m(), 3);
  EXPECT_EQ(c.n(), 2);
  EXPECT_EQ(c.size(), 6u);
  EXPECT_EQ(RationalCoefficients::from_flat(3, 2, c.flat()), c);
  EXPECT_THROW(RationalCoefficients::from_flat(3, 2, std::vector<double>(5)), DomainError);
}

TEST(RationalCoefficientsTest, DegreeZeroDenominator) {
  const RationalCoefficients c{{1, 2}, {}};
  EXPECT_EQ(rational_forward(3.0, c), 7.0);
  EXPECT_TRUE(rational_backward(3.0, c).d_denominator.empty());
}

TEST(RationalIo, TextRoundTripIsExact) {
  SplitMix64 rng(10);
  const auto c = random_coeffs(rng);
  std::stringstream ss;
  write_coefficients(ss, c);
  EXPECT_EQ(ss.str().substr(0, 4), "5 4\n");
  EXPECT_EQ(read_coefficients(ss), c);
}

TEST(RationalIo, RejectsMalformed) {
  for (const char* text : {"", "5\n", "1 1\n0.5\n", "1 1\n1\n2\nx\n", "1 0\n1\nabc\n", "1 0\n1\n2\n3\n", "-1 2\n"}) {
    std::stringstream ss(text);
    EXPECT_THROW(read_coefficients(ss), FormatError) << text;
  }
}

}  // namespace
}  // namespace raft
