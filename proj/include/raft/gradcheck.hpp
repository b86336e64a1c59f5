// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "raft/tensor.hpp"

namespace raft {

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-3)
double relative_error(double analytic, double numeric) noexcept;

struct GradcheckReport {
  std::string name;
  size_t instances = 0;
  size_t entries = 0;
  double max_rel_error = 0.0;
  double threshold = 0.0;
  std::string worst;  // where the largest error was seen

  bool passed() const noexcept { return entries > 0 && max_rel_error <= threshold; }
  void merge(const GradcheckReport& other);
};

struct GradcheckOptions {
  uint64_t seed = 0;
  size_t instances = 20;
  double step = 1e-5;
  double threshold = 1e-5;
};

using ScalarFunction = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Compares reverse-mode gradients of a scalar function against central
/// differences for every element of every input that requires grad.
GradcheckReport check_gradients(const std::string& name, const ScalarFunction& f, std::vector<Tensor<double>> inputs,
                                double step, double threshold);

/// One report per differentiable tensor op, each over `instances` random
/// draws.
std::vector<GradcheckReport> gradcheck_ops(const GradcheckOptions& options);

/// Scalar rational derivatives w.r.t. the input and every coefficient.
GradcheckReport gradcheck_rational_scalar(const GradcheckOptions& options);

struct ModelGradcheck {
  GradcheckReport double_precision;  // analytic vs numeric, both in double
  GradcheckReport float_vs_double;   // float analytic vs double numeric
};

/// Two-layer rational model, MLM loss plus classification loss. Checks up to
/// `max_entries_per_tensor` evenly spaced entries of every parameter.
ModelGradcheck gradcheck_model(uint64_t seed, size_t max_entries_per_tensor = 24, double step = 1e-5,
                               double double_threshold = 1e-5, double float_threshold = 1e-3);

}  // namespace raft
