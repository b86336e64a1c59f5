// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace raft {

/// Coefficients of a safe rational activation
///
///   F(x) = (a_0 + a_1 x + ... + a_m x^m) / (1 + |b_1 x + ... + b_n x^n|)
///
/// The denominator has no b_0 term; a constant inside |.| would be
/// redundant with the leading 1. Degrees are implied by vector lengths.
struct RationalCoefficients {
  std::vector<double> numerator;    // a_0..a_m
  std::vector<double> denominator;  // b_1..b_n

  int m() const noexcept { return static_cast<int>(numerator.size()) - 1; }
  int n() const noexcept { return static_cast<int>(denominator.size()); }
  size_t size() const noexcept { return numerator.size() + denominator.size(); }

  /// Throws DomainError on empty numerator or non-finite values.
  void validate() const;

  /// [a_0..a_m, b_1..b_n]
  std::vector<double> flat() const;
  static RationalCoefficients from_flat(int m, int n, std::span<const double> values);

  /// F(x) = x.
  static RationalCoefficients identity(int m = 5, int n = 4);

  bool operator==(const RationalCoefficients&) const = default;
};

struct RationalEval {
  double value = 0.0;
  double d_input = 0.0;
  std::vector<double> d_numerator;
  std::vector<double> d_denominator;
};

double rational_forward(double x, const RationalCoefficients& coeffs);
RationalEval rational_backward(double x, const RationalCoefficients& coeffs);
std::vector<double> rational_forward_batch(std::span<const double> xs, const RationalCoefficients& coeffs);

namespace kernel {

// Unchecked kernels over raw coefficient spans, used by the tensor op.
// `num` holds a_0..a_m, `den` holds b_1..b_n.

double value(double x, std::span<const double> num, std::span<const double> den) noexcept;

/// Adds upstream * dF/da_j into d_num and upstream * dF/db_k into d_den;
/// returns dF/dx (not scaled by upstream).
double accumulate(double x, double upstream, std::span<const double> num, std::span<const double> den,
                  std::span<double> d_num, std::span<double> d_den) noexcept;

}  // namespace kernel

/// Text form: first line "m n", then one coefficient per line in flat order,
/// printed with 17 significant digits.
void write_coefficients(std::ostream& out, const RationalCoefficients& coeffs);
RationalCoefficients read_coefficients(std::istream& in);
void save_coefficients(const std::string& path, const RationalCoefficients& coeffs);
RationalCoefficients load_coefficients(const std::string& path);

}  // namespace raft
