// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "raft/rational.hpp"

namespace raft {

enum class FitTarget { GELU, ReLU, Identity, Swish, Tanh, Sigmoid };

std::string_view to_string(FitTarget target) noexcept;
FitTarget parse_fit_target(std::string_view name);

/// Reference activations in double precision. GELU is the exact erf form.
double gelu_exact(double x) noexcept;
double evaluate_target(FitTarget target, double x) noexcept;

struct FitSpec {
  FitTarget target = FitTarget::GELU;
  int m = 5;
  int n = 4;
  double lo = -3.0;
  double hi = 3.0;
  int grid_points = 1000;
  int max_iterations = 200;
  double tolerance = 1e-12;

  /// lo < hi, grid_points >= 2(m+n+1), max_iterations > 0, tolerance > 0.
  void validate() const;
};

struct FitResult {
  RationalCoefficients coeffs;
  double max_abs_error = 0.0;
  double rms_error = 0.0;
  bool converged = false;
};

/// Least-squares fit of a safe rational function to `spec.target` on an
/// evenly spaced grid over [lo, hi].
///
/// Linear phase: for a sign pattern s_i of the denominator polynomial, the
/// safe form F = P / (1 + s_i S) is linear in (a, b), so
///   P(x_i) - y_i s_i S(x_i) = y_i
/// is solved by QR (ridge-regularized normal equations with lambda = 1e-8 if
/// the system is rank deficient). The pattern is re-derived from the
/// solution until it stops changing. Starts: s = +1 (the plain
/// linearization with |.| dropped), s = sign(x), and sign(x) sign(x - r)
/// for r on a coarse interior grid, since S always vanishes at 0.
///
/// Refinement: Levenberg-Marquardt on the true safe form, with Jacobians
/// taken from rational_backward, applied to every start; the best result
/// seeds further linear restarts from its own sign pattern. Non-convergence
/// is reported via `converged`, never thrown.
FitResult fit_rational(const FitSpec& spec);
/// As fit_rational with an arbitrary target; spec.target is ignored.
FitResult fit_function(const FitSpec& spec, const std::function<double(double)>& target);

/// Reports max and rms error of `coeffs` against the target on spec's grid.
FitResult evaluate_fit(const FitSpec& spec, const RationalCoefficients& coeffs);
FitResult evaluate_fit(const FitSpec& spec, const RationalCoefficients& coeffs,
                       const std::function<double(double)>& target);

struct DegreeStudyRow {
  FitTarget target;
  int m;
  int n;
  FitResult result;
};

/// Fits every (m, n) in {4,5} x {4,5} for each spec (the spec's own degrees
/// are ignored). Fits run on up to `threads` worker threads; results are
/// identical for any thread count.
std::vector<DegreeStudyRow> degree_study(const std::vector<FitSpec>& specs, int threads = 1);

/// CSV with header target,m,n,max_abs_error,rms_error,converged.
std::string degree_study_csv(const std::vector<DegreeStudyRow>& rows);

/// CSV with header x,target,fit,abs_error over the spec's grid.
std::string fit_error_csv(const FitSpec& spec, const RationalCoefficients& coeffs);

/// The (5, 4) GELU fit on [-3, 3], computed once per process.
const RationalCoefficients& gelu_initialization();

}  // namespace raft
