// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#include "raft/rational.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "raft/errors.hpp"

namespace raft {

namespace {

void require_finite_input(double x) {
  if (!std::isfinite(x)) throw DomainError("rational: non-finite input");
}

double sign_of(double s) noexcept { return s > 0.0 ? 1.0 : (s < 0.0 ? -1.0 : 0.0); }

struct Horner {
  double p, dp, s, ds;
};

// P, P', S = sum_k b_k x^k and S', all by Horner's scheme.
Horner evaluate(double x, std::span<const double> num, std::span<const double> den) noexcept {
  Horner h{0.0, 0.0, 0.0, 0.0};
  for (size_t j = num.size(); j-- > 0;) {
    h.dp = h.dp * x + h.p;
    h.p = h.p * x + num[j];
  }
  // S = x * (b_1 + b_2 x + ... + b_n x^(n-1)).
  double inner = 0.0, d_inner = 0.0;
  for (size_t k = den.size(); k-- > 0;) {
    d_inner = d_inner * x + inner;
    inner = inner * x + den[k];
  }
  h.s = inner * x;
  h.ds = d_inner * x + inner;
  return h;
}

}  // namespace

void RationalCoefficients::validate() const {
  if (numerator.empty()) throw DomainError("rational: numerator needs at least a_0");
  for (double v : numerator)
    if (!std::isfinite(v)) throw DomainError("rational: non-finite numerator coefficient");
  for (double v : denominator)
    if (!std::isfinite(v)) throw DomainError("rational: non-finite denominator coefficient");
}

std::vector<double> RationalCoefficients::flat() const {
  std::vector<double> out(numerator);
  out.insert(out.end(), denominator.begin(), denominator.end());
  return out;
}

RationalCoefficients RationalCoefficients::from_flat(int m, int n, std::span<const double> values) {
  if (m < 0 || n < 0) throw DomainError("rational: negative degree");
  if (values.size() != static_cast<size_t>(m + 1 + n))
    throw DomainError("rational: flat coefficient list has length " + std::to_string(values.size()) +
                      ", expected " + std::to_string(m + 1 + n));
  RationalCoefficients c;
  c.numerator.assign(values.begin(), values.begin() + m + 1);
  c.denominator.assign(values.begin() + m + 1, values.end());
  c.validate();
  return c;
}

RationalCoefficients RationalCoefficients::identity(int m, int n) {
  if (m < 1 || n < 0) throw DomainError("rational: identity needs m >= 1");
  RationalCoefficients c;
  c.numerator.assign(static_cast<size_t>(m) + 1, 0.0);
  c.numerator[1] = 1.0;
  c.denominator.assign(static_cast<size_t>(n), 0.0);
  return c;
}

double rational_forward(double x, const RationalCoefficients& coeffs) {
  require_finite_input(x);
  coeffs.validate();
  return kernel::value(x, coeffs.numerator, coeffs.denominator);
}

RationalEval rational_backward(double x, const RationalCoefficients& coeffs) {
  require_finite_input(x);
  coeffs.validate();
  RationalEval e;
  e.d_numerator.assign(coeffs.numerator.size(), 0.0);
  e.d_denominator.assign(coeffs.denominator.size(), 0.0);
  e.value = kernel::value(x, coeffs.numerator, coeffs.denominator);
  e.d_input = kernel::accumulate(x, 1.0, coeffs.numerator, coeffs.denominator, e.d_numerator, e.d_denominator);
  return e;
}

std::vector<double> rational_forward_batch(std::span<const double> xs, const RationalCoefficients& coeffs) {
  coeffs.validate();
  std::vector<double> out(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    require_finite_input(xs[i]);
    out[i] = kernel::value(xs[i], coeffs.numerator, coeffs.denominator);
  }
  return out;
}

namespace kernel {

double value(double x, std::span<const double> num, std::span<const double> den) noexcept {
  const Horner h = evaluate(x, num, den);
  return h.p / (1.0 + std::abs(h.s));
}

double accumulate(double x, double upstream, std::span<const double> num, std::span<const double> den,
                  std::span<double> d_num, std::span<double> d_den) noexcept {
  const Horner h = evaluate(x, num, den);
  const double sgn = sign_of(h.s);
  const double q = 1.0 + std::abs(h.s);
  const double inv_q = 1.0 / q;
  const double f = h.p * inv_q;

  double power = 1.0;
  const double g_num = upstream * inv_q;
  for (size_t j = 0; j < num.size(); ++j) {
    d_num[j] += g_num * power;
    power *= x;
  }
  if (sgn != 0.0) {
    // dF/db_k = -P sign(S) x^k / Q^2 = -F sign(S) x^k / Q
    const double g_den = -upstream * f * sgn * inv_q;
    power = x;
    for (size_t k = 0; k < den.size(); ++k) {
      d_den[k] += g_den * power;
      power *= x;
    }
  }
  return (h.dp - f * sgn * h.ds) * inv_q;
}

}  // namespace kernel

void write_coefficients(std::ostream& out, const RationalCoefficients& coeffs) {
  out << coeffs.m() << ' ' << coeffs.n() << '\n';
  out << std::setprecision(17);
  for (double v : coeffs.flat()) out << v << '\n';
}

RationalCoefficients read_coefficients(std::istream& in) {
  int m = -1, n = -1;
  if (!(in >> m >> n) || m < 0 || n < 0) throw FormatError("coefficient file: bad (m, n) header");
  std::vector<double> values;
  for (int i = 0; i < m + 1 + n; ++i) {
    std::string token;
    if (!(in >> token)) throw FormatError("coefficient file: expected " + std::to_string(m + 1 + n) + " values");
    try {
      size_t used = 0;
      values.push_back(std::stod(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw FormatError("coefficient file: unparsable value '" + token + "'");
    }
  }
  std::string extra;
  if (in >> extra) throw FormatError("coefficient file: trailing data");
  try {
    return RationalCoefficients::from_flat(m, n, values);
  } catch (const DomainError& e) {
    throw FormatError(std::string("coefficient file: ") + e.what());
  }
}

void save_coefficients(const std::string& path, const RationalCoefficients& coeffs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_coefficients(out, coeffs);
}

RationalCoefficients load_coefficients(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_coefficients(in);
}

}  // namespace raft
