// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#include "raft/fitting.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <thread>

#include "raft/errors.hpp"

namespace raft {

namespace {

constexpr double kRidgeLambda = 1e-8;
constexpr int kMaxSignRounds = 25;
constexpr int kExtraRootStarts = 16;

std::vector<double> make_grid(const FitSpec& spec) {
  std::vector<double> xs(static_cast<size_t>(spec.grid_points));
  const double step = (spec.hi - spec.lo) / static_cast<double>(spec.grid_points - 1);
  for (int i = 0; i < spec.grid_points; ++i) xs[static_cast<size_t>(i)] = spec.lo + step * i;
  xs.back() = spec.hi;
  return xs;
}

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double denominator_poly(double x, std::span<const double> den) {
  double inner = 0.0;
  for (size_t k = den.size(); k-- > 0;) inner = inner * x + den[k];
  return inner * x;
}

double sum_squared_error(const std::vector<double>& xs, const std::vector<double>& ys, std::span<const double> num,
                         std::span<const double> den) {
  double sse = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const double r = kernel::value(xs[i], num, den) - ys[i];
    sse += r * r;
  }
  return sse;
}

// Solves min ||A t - y|| for the linear form under sign pattern `signs`.
Eigen::VectorXd solve_linear_phase(const std::vector<double>& xs, const std::vector<double>& ys,
                                   const std::vector<double>& signs, int m, int n) {
  const Eigen::Index rows = static_cast<Eigen::Index>(xs.size());
  const Eigen::Index cols = m + 1 + n;
  Eigen::MatrixXd a(rows, cols);
  Eigen::VectorXd rhs(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double x = xs[static_cast<size_t>(i)];
    const double y = ys[static_cast<size_t>(i)];
    const double s = signs[static_cast<size_t>(i)];
    double power = 1.0;
    for (int j = 0; j <= m; ++j) {
      a(i, j) = power;
      power *= x;
    }
    power = x;
    for (int k = 0; k < n; ++k) {
      a(i, m + 1 + k) = -y * s * power;
      power *= x;
    }
    rhs(i) = y;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() == cols) return qr.solve(rhs);

  // Rank deficient: ridge regression, solved through the augmented system
  // [A; sqrt(lambda) I] t = [y; 0] to avoid squaring the condition number.
  Eigen::MatrixXd aug(rows + cols, cols);
  aug.topRows(rows) = a;
  aug.bottomRows(cols) = std::sqrt(kRidgeLambda) * Eigen::MatrixXd::Identity(cols, cols);
  Eigen::VectorXd aug_rhs = Eigen::VectorXd::Zero(rows + cols);
  aug_rhs.head(rows) = rhs;
  return aug.colPivHouseholderQr().solve(aug_rhs);
}

struct Candidate {
  std::vector<double> params;
  double sse = std::numeric_limits<double>::infinity();
};

Candidate sign_iterated_linear_fit(const std::vector<double>& xs, const std::vector<double>& ys,
                                   std::vector<double> signs, int m, int n) {
  Candidate best;
  for (int round = 0; round < kMaxSignRounds; ++round) {
    const Eigen::VectorXd t = solve_linear_phase(xs, ys, signs, m, n);
    std::vector<double> params(t.data(), t.data() + t.size());
    if (!std::all_of(params.begin(), params.end(), [](double v) { return std::isfinite(v); })) break;
    const std::span<const double> num(params.data(), static_cast<size_t>(m + 1));
    const std::span<const double> den(params.data() + m + 1, static_cast<size_t>(n));
    const double sse = sum_squared_error(xs, ys, num, den);
    if (sse < best.sse) best = {params, sse};

    std::vector<double> next(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) next[i] = sign_of(denominator_poly(xs[i], den));
    if (next == signs) break;
    signs = std::move(next);
  }
  return best;
}

// Levenberg-Marquardt on the safe form. Returns true when a stopping
// criterion other than the iteration cap fired.
bool refine(const std::vector<double>& xs, const std::vector<double>& ys, int m, int n, int max_iterations,
            double tolerance, Candidate& cand) {
  const size_t p = static_cast<size_t>(m + 1 + n);
  const auto split = [&](const std::vector<double>& v) {
    return std::pair{std::span<const double>(v.data(), static_cast<size_t>(m + 1)),
                     std::span<const double>(v.data() + m + 1, static_cast<size_t>(n))};
  };
  if (cand.sse == 0.0) return true;

  double mu = 1e-3;
  std::vector<double> d_num(static_cast<size_t>(m + 1)), d_den(static_cast<size_t>(n));
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::MatrixXd jtj = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    Eigen::VectorXd jtr = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
    Eigen::VectorXd row(static_cast<Eigen::Index>(p));
    auto [num, den] = split(cand.params);
    for (size_t i = 0; i < xs.size(); ++i) {
      std::fill(d_num.begin(), d_num.end(), 0.0);
      std::fill(d_den.begin(), d_den.end(), 0.0);
      kernel::accumulate(xs[i], 1.0, num, den, d_num, d_den);
      for (size_t j = 0; j < d_num.size(); ++j) row(static_cast<Eigen::Index>(j)) = d_num[j];
      for (size_t k = 0; k < d_den.size(); ++k) row(static_cast<Eigen::Index>(d_num.size() + k)) = d_den[k];
      const double r = kernel::value(xs[i], num, den) - ys[i];
      jtj.selfadjointView<Eigen::Lower>().rankUpdate(row);
      jtr += r * row;
    }
    jtj.triangularView<Eigen::StrictlyUpper>() = jtj.transpose();
    if (jtr.norm() <= 1e-300) return true;

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal() += mu * (jtj.diagonal().array() + 1e-12).matrix();
      const Eigen::VectorXd delta = damped.ldlt().solve(-jtr);
      std::vector<double> trial(cand.params);
      for (size_t j = 0; j < p; ++j) trial[j] += delta(static_cast<Eigen::Index>(j));
      auto [tn, td] = split(trial);
      const double sse = sum_squared_error(xs, ys, tn, td);
      if (std::isfinite(sse) && sse < cand.sse) {
        const double improvement = (cand.sse - sse) / cand.sse;
        cand = {std::move(trial), sse};
        mu = std::max(mu / 3.0, 1e-15);
        accepted = true;
        if (improvement < tolerance || sse == 0.0) return true;
      } else {
        mu *= 4.0;
        if (mu > 1e12) return true;  // no descent direction left: stationary
        if (++it >= max_iterations) return false;
      }
    }
  }
  return false;
}

}  // namespace

std::string_view to_string(FitTarget target) noexcept {
  switch (target) {
    case FitTarget::GELU: return "gelu";
    case FitTarget::ReLU: return "relu";
    case FitTarget::Identity: return "identity";
    case FitTarget::Swish: return "swish";
    case FitTarget::Tanh: return "tanh";
    case FitTarget::Sigmoid: return "sigmoid";
  }
  return "unknown";
}

FitTarget parse_fit_target(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (FitTarget t : {FitTarget::GELU, FitTarget::ReLU, FitTarget::Identity, FitTarget::Swish, FitTarget::Tanh,
                      FitTarget::Sigmoid})
    if (lower == to_string(t)) return t;
  throw PreconditionError("unknown fit target '" + std::string(name) + "'");
}

double gelu_exact(double x) noexcept { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double evaluate_target(FitTarget target, double x) noexcept {
  switch (target) {
    case FitTarget::GELU: return gelu_exact(x);
    case FitTarget::ReLU: return x > 0.0 ? x : 0.0;
    case FitTarget::Identity: return x;
    case FitTarget::Swish: return x / (1.0 + std::exp(-x));
    case FitTarget::Tanh: return std::tanh(x);
    case FitTarget::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
  }
  return 0.0;
}

void FitSpec::validate() const {
  if (m < 0 || n < 0) throw PreconditionError("fit: degrees must be non-negative");
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi))
    throw PreconditionError("fit: range must satisfy lo < hi");
  if (grid_points < 2 * (m + n + 1))
    throw PreconditionError("fit: grid_points must be at least 2(m+n+1) = " + std::to_string(2 * (m + n + 1)));
  if (max_iterations <= 0) throw PreconditionError("fit: max_iterations must be positive");
  if (!(tolerance > 0.0)) throw PreconditionError("fit: tolerance must be positive");
}

FitResult evaluate_fit(const FitSpec& spec, const RationalCoefficients& coeffs) {
  return evaluate_fit(spec, coeffs, [&spec](double x) { return evaluate_target(spec.target, x); });
}

FitResult evaluate_fit(const FitSpec& spec, const RationalCoefficients& coeffs,
                       const std::function<double(double)>& target) {
  spec.validate();
  FitResult r;
  r.coeffs = coeffs;
  double sse = 0.0;
  for (double x : make_grid(spec)) {
    const double err = std::abs(kernel::value(x, coeffs.numerator, coeffs.denominator) - target(x));
    r.max_abs_error = std::max(r.max_abs_error, err);
    sse += err * err;
  }
  r.rms_error = std::sqrt(sse / spec.grid_points);
  return r;
}

FitResult fit_rational(const FitSpec& spec) {
  return fit_function(spec, [&spec](double x) { return evaluate_target(spec.target, x); });
}

FitResult fit_function(const FitSpec& spec, const std::function<double(double)>& target) {
  spec.validate();
  const std::vector<double> xs = make_grid(spec);
  std::vector<double> ys(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) ys[i] = target(xs[i]);

  std::vector<double> plus(xs.size(), 1.0);
  std::vector<double> odd(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) odd[i] = sign_of(xs[i]);

  std::vector<std::vector<double>> starts{plus};
  if (spec.n > 0) starts.push_back(odd);
  // S always vanishes at 0; also try one further crossing at r. A pattern
  // and its negation describe the same |S|, so these cover two crossings.
  if (spec.n > 1) {
    for (int k = 1; k < kExtraRootStarts; ++k) {
      const double r = spec.lo + (spec.hi - spec.lo) * k / kExtraRootStarts;
      std::vector<double> signs(xs.size());
      for (size_t i = 0; i < xs.size(); ++i) signs[i] = sign_of(xs[i]) * sign_of(xs[i] - r);
      starts.push_back(std::move(signs));
    }
  }

  // Each start is refined; the best refined candidate wins.
  Candidate best;
  bool converged = false;
  for (auto& signs : starts) {
    Candidate cand = sign_iterated_linear_fit(xs, ys, std::move(signs), spec.m, spec.n);
    if (!std::isfinite(cand.sse)) continue;
    const bool ok = refine(xs, ys, spec.m, spec.n, spec.max_iterations, spec.tolerance, cand);
    if (cand.sse < best.sse) {
      best = std::move(cand);
      converged = ok;
    }
    if (best.sse == 0.0) break;
  }
  if (!std::isfinite(best.sse)) {
    best.params.assign(static_cast<size_t>(spec.m + 1 + spec.n), 0.0);
    best.sse = sum_squared_error(xs, ys, std::span<const double>(best.params.data(), static_cast<size_t>(spec.m + 1)),
                                 std::span<const double>(best.params.data() + spec.m + 1, static_cast<size_t>(spec.n)));
    converged = refine(xs, ys, spec.m, spec.n, spec.max_iterations, spec.tolerance, best);
  }
  // The refined denominator may cross zero where the linear start did not;
  // restart the linear phase from its sign pattern while that helps.
  for (int round = 0; round < kMaxSignRounds && spec.n > 0 && best.sse > 0.0; ++round) {
    const std::span<const double> den(best.params.data() + spec.m + 1, static_cast<size_t>(spec.n));
    std::vector<double> signs(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) signs[i] = sign_of(denominator_poly(xs[i], den));
    Candidate next = sign_iterated_linear_fit(xs, ys, std::move(signs), spec.m, spec.n);
    if (!(next.sse < best.sse)) break;
    const bool next_converged = refine(xs, ys, spec.m, spec.n, spec.max_iterations, spec.tolerance, next);
    if (!(next.sse < best.sse)) break;
    best = std::move(next);
    converged = next_converged;
  }
  FitResult r = evaluate_fit(spec, RationalCoefficients::from_flat(spec.m, spec.n, best.params), target);
  r.converged = converged;
  return r;
}

std::vector<DegreeStudyRow> degree_study(const std::vector<FitSpec>& specs, int threads) {
  if (specs.empty()) throw PreconditionError("degree_study: no targets given");
  std::vector<FitSpec> jobs;
  for (const FitSpec& base : specs) {
    for (int m : {4, 5}) {
      for (int n : {4, 5}) {
        FitSpec s = base;
        s.m = m;
        s.n = n;
        s.validate();
        jobs.push_back(s);
      }
    }
  }
  std::vector<DegreeStudyRow> rows(jobs.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < jobs.size(); i = next++)
      rows[i] = {jobs[i].target, jobs[i].m, jobs[i].n, fit_rational(jobs[i])};
  };
  const size_t workers = std::clamp<size_t>(static_cast<size_t>(std::max(threads, 1)), 1, jobs.size());
  std::vector<std::jthread> pool;
  for (size_t t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  return rows;
}

std::string degree_study_csv(const std::vector<DegreeStudyRow>& rows) {
  std::ostringstream out;
  out << "target,m,n,max_abs_error,rms_error,converged\n" << std::setprecision(10);
  for (const auto& r : rows)
    out << to_string(r.target) << ',' << r.m << ',' << r.n << ',' << r.result.max_abs_error << ','
        << r.result.rms_error << ',' << (r.result.converged ? 1 : 0) << '\n';
  return out.str();
}

std::string fit_error_csv(const FitSpec& spec, const RationalCoefficients& coeffs) {
  spec.validate();
  std::ostringstream out;
  out << "x,target,fit,abs_error\n" << std::setprecision(17);
  for (double x : make_grid(spec)) {
    const double t = evaluate_target(spec.target, x);
    const double f = kernel::value(x, coeffs.numerator, coeffs.denominator);
    out << x << ',' << t << ',' << f << ',' << std::abs(f - t) << '\n';
  }
  return out.str();
}

const RationalCoefficients& gelu_initialization() {
  static const RationalCoefficients coeffs = fit_rational(FitSpec{}).coeffs;
  return coeffs;
}

}  // namespace raft
