// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#include "raft/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "raft/errors.hpp"
#include "raft/fitting.hpp"
#include "raft/random.hpp"
#include "raft/rational.hpp"
#include "raft/transformer.hpp"

namespace raft {

double relative_error(double analytic, double numeric) noexcept {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

void GradcheckReport::merge(const GradcheckReport& other) {
  instances += other.instances;
  entries += other.entries;
  if (other.max_rel_error > max_rel_error || worst.empty()) {
    max_rel_error = std::max(max_rel_error, other.max_rel_error);
    worst = other.worst;
  }
}

namespace {

void record(GradcheckReport& r, double analytic, double numeric, const std::string& where) {
  const double e = relative_error(analytic, numeric);
  ++r.entries;
  if (e > r.max_rel_error || !std::isfinite(e)) {
    r.max_rel_error = std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
    r.worst = where;
  }
}

Tensor<double> random_tensor(SplitMix64& rng, Shape shape, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal(0.0, scale);
  return Tensor<double>::from(std::move(shape), std::move(v), true);
}

// Values kept at least `gap` away from zero, for ops with a kink there.
Tensor<double> away_from_zero(SplitMix64& rng, Shape shape, double gap) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) {
    const double mag = gap + std::abs(rng.normal());
    x = rng.uniform() < 0.5 ? -mag : mag;
  }
  return Tensor<double>::from(std::move(shape), std::move(v), true);
}

// Fixed pseudo-random weights so every output element gets a distinct
// upstream gradient.
Tensor<double> weighted_sum(const Tensor<double>& t) {
  std::vector<double> w(t.size());
  for (size_t i = 0; i < w.size(); ++i) w[i] = std::cos(0.91 * static_cast<double>(i) + 0.3) + 0.25;
  return sum(mul(t, Tensor<double>::from(t.shape(), std::move(w))));
}

double denominator_poly(double x, std::span<const double> den) {
  double s = 0.0;
  for (size_t k = den.size(); k-- > 0;) s = (s + den[k]) * x;
  return s;
}

RationalCoefficients random_coefficients(SplitMix64& rng) {
  const auto& base = gelu_initialization();
  std::vector<double> flat = base.flat();
  for (auto& c : flat) c += rng.normal(0.0, 0.3);
  return RationalCoefficients::from_flat(base.m(), base.n(), flat);
}

struct OpCase {
  std::string name;
  std::function<std::pair<ScalarFunction, std::vector<Tensor<double>>>(SplitMix64&)> make;
};

std::vector<OpCase> op_cases() {
  using In = std::vector<Tensor<double>>;
  std::vector<OpCase> cases;
  cases.push_back({"add", [](SplitMix64& r) {
                     return std::pair{ScalarFunction([](const In& t) { return weighted_sum(add(t[0], t[1])); }),
                                      In{random_tensor(r, {3, 4}), random_tensor(r, {3, 4})}};
                   }});
  cases.push_back({"add_bias", [](SplitMix64& r) {
                     return std::pair{ScalarFunction([](const In& t) { return weighted_sum(add_bias(t[0], t[1])); }),
                                      In{random_tensor(r, {2, 3, 4}), random_tensor(r, {4})}};
                   }});
  cases.push_back({"mul", [](SplitMix64& r) {
                     return std::pair{ScalarFunction([](const In& t) { return weighted_sum(mul(t[0], t[1])); }),
                                      In{random_tensor(r, {3, 4}), random_tensor(r, {3, 4})}};
                   }});
  cases.push_back({"scale", [](SplitMix64& r) {
                     return std::pair{ScalarFunction([](const In& t) { return weighted_sum(scale(t[0], -1.7)); }),
                                      In{random_tensor(r, {5})}};
                   }});
  cases.push_back({"matmul", [](SplitMix64& r) {
                     return std::pair{ScalarFunction([](const In& t) { return weighted_sum(matmul(t[0], t[1])); }),
                                      In{random_tensor(r, {3, 4}), random_tensor(r, {4, 5})}};
                   }});
  cases.push_back({"matmul_transposed", [](SplitMix64& r) {
                     return std::pair{
                         ScalarFunction([](const In& t) { return weighted_sum(matmul(t[0], t[1], true)); }),
                         In{random_tensor(r, {3, 4}), random_tensor(r, {5, 4})}};
                   }});
  cases.push_back({"bmm", [](SplitMix64& r) {
                     return std::pair{ScalarFunction([](const In& t) { return weighted_sum(bmm(t[0], t[1])); }),
                                      In{random_tensor(r, {2, 3, 4}), random_tensor(r, {2, 4, 2})}};
                   }});
  cases.push_back({"bmm_transposed", [](SplitMix64& r) {
                     return std::pair{ScalarFunction([](const In& t) { return weighted_sum(bmm(t[0], t[1], true)); }),
                                      In{random_tensor(r, {2, 3, 4}), random_tensor(r, {2, 2, 4})}};
                   }});
  cases.push_back({"transpose", [](SplitMix64& r) {
                     return std::pair{
                         ScalarFunction([](const In& t) { return weighted_sum(transpose(t[0], 0, 2)); }),
                         In{random_tensor(r, {2, 3, 4})}};
                   }});
  cases.push_back({"reshape", [](SplitMix64& r) {
                     return std::pair{ScalarFunction([](const In& t) { return weighted_sum(reshape(t[0], {4, 3})); }),
                                      In{random_tensor(r, {2, 6})}};
                   }});
  cases.push_back({"softmax", [](SplitMix64& r) {
                     return std::pair{ScalarFunction([](const In& t) { return weighted_sum(softmax(t[0])); }),
                                      In{random_tensor(r, {3, 5}, 2.0)}};
                   }});
  cases.push_back({"mask_keys", [](SplitMix64& r) {
                     return std::pair{ScalarFunction([](const In& t) {
                                        static const std::vector<uint8_t> mask = {1, 1, 0, 1, 1, 1, 1, 0};
                                        return weighted_sum(softmax(mask_keys(t[0], mask, 2, 2)));
                                      }),
                                      In{random_tensor(r, {4, 3, 4})}};
                   }});
  cases.push_back({"layer_norm", [](SplitMix64& r) {
                     return std::pair{
                         ScalarFunction([](const In& t) { return weighted_sum(layer_norm(t[0], t[1], t[2])); }),
                         In{random_tensor(r, {3, 6}), random_tensor(r, {6}), random_tensor(r, {6})}};
                   }});
  cases.push_back({"gelu", [](SplitMix64& r) {
                     return std::pair{ScalarFunction([](const In& t) { return weighted_sum(gelu(t[0])); }),
                                      In{random_tensor(r, {8}, 2.0)}};
                   }});
  cases.push_back({"relu", [](SplitMix64& r) {
                     return std::pair{ScalarFunction([](const In& t) { return weighted_sum(relu(t[0])); }),
                                      In{away_from_zero(r, {8}, 1e-2)}};
                   }});
  cases.push_back({"rational", [](SplitMix64& r) {
                     const auto c = random_coefficients(r);
                     const auto flat = c.flat();
                     std::vector<double> xs;
                     while (xs.size() < 10) {
                       const double x = r.uniform(-3.0, 3.0);
                       if (std::abs(denominator_poly(x, c.denominator)) > 1e-2) xs.push_back(x);
                     }
                     const int m = c.m(), n = c.n();
                     return std::pair{
                         ScalarFunction([m, n](const In& t) { return weighted_sum(rational(t[0], t[1], m, n)); }),
                         In{Tensor<double>::from({xs.size()}, xs, true),
                            Tensor<double>::from({flat.size()}, flat, true)}};
                   }});
  cases.push_back({"embedding", [](SplitMix64& r) {
                     return std::pair{ScalarFunction([](const In& t) {
                                        static const std::vector<int32_t> ids = {3, 0, 6, 3, 2};
                                        return weighted_sum(embedding(t[0], ids));
                                      }),
                                      In{random_tensor(r, {7, 4})}};
                   }});
  cases.push_back({"gather_rows", [](SplitMix64& r) {
                     return std::pair{ScalarFunction([](const In& t) {
                                        static const std::vector<size_t> rows = {4, 1, 1, 0};
                                        return weighted_sum(gather_rows(t[0], rows));
                                      }),
                                      In{random_tensor(r, {5, 3})}};
                   }});
  cases.push_back({"cross_entropy", [](SplitMix64& r) {
                     return std::pair{ScalarFunction([](const In& t) {
                                        static const std::vector<int32_t> targets = {2, kIgnoreIndex, 0, 4};
                                        return cross_entropy(t[0], targets);
                                      }),
                                      In{random_tensor(r, {4, 5}, 2.0)}};
                   }});
  cases.push_back({"sum", [](SplitMix64& r) {
                     return std::pair{ScalarFunction([](const In& t) { return sum(mul(t[0], t[0])); }),
                                      In{random_tensor(r, {2, 3})}};
                   }});
  cases.push_back({"mean", [](SplitMix64& r) {
                     return std::pair{ScalarFunction([](const In& t) { return mean(mul(t[0], t[0])); }),
                                      In{random_tensor(r, {2, 3})}};
                   }});
  return cases;
}

}  // namespace

GradcheckReport check_gradients(const std::string& name, const ScalarFunction& f, std::vector<Tensor<double>> inputs,
                                double step, double threshold) {
  GradcheckReport report;
  report.name = name;
  report.instances = 1;
  report.threshold = threshold;
  for (auto& t : inputs)
    if (t.requires_grad()) t.zero_grad();
  const Tensor<double> loss = f(inputs);
  if (loss.size() != 1) throw PreconditionError("check_gradients: function must return a scalar");
  backward(loss);

  NoGradGuard guard;
  for (size_t k = 0; k < inputs.size(); ++k) {
    Tensor<double>& t = inputs[k];
    if (!t.requires_grad()) continue;
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    for (size_t i = 0; i < t.size(); ++i) {
      const double saved = t.data()[i];
      t.data()[i] = saved + step;
      const double plus = f(inputs).item();
      t.data()[i] = saved - step;
      const double minus = f(inputs).item();
      t.data()[i] = saved;
      record(report, analytic[i], (plus - minus) / (2.0 * step),
             name + " input " + std::to_string(k) + "[" + std::to_string(i) + "]");
    }
  }
  return report;
}

std::vector<GradcheckReport> gradcheck_ops(const GradcheckOptions& options) {
  std::vector<GradcheckReport> reports;
  for (const auto& c : op_cases()) {
    SplitMix64 rng(derive_seed(options.seed, c.name));
    GradcheckReport total;
    total.name = c.name;
    total.threshold = options.threshold;
    for (size_t i = 0; i < options.instances; ++i) {
      auto [f, inputs] = c.make(rng);
      total.merge(check_gradients(c.name, f, std::move(inputs), options.step, options.threshold));
    }
    reports.push_back(std::move(total));
  }
  return reports;
}

GradcheckReport gradcheck_rational_scalar(const GradcheckOptions& options) {
  GradcheckReport report;
  report.name = "rational_scalar";
  report.threshold = options.threshold;
  SplitMix64 rng(derive_seed(options.seed, "rational_scalar"));
  const double h = options.step;
  for (size_t inst = 0; inst < options.instances; ++inst) {
    const auto c = random_coefficients(rng);
    double x = 0.0;
    do x = rng.uniform(-3.0, 3.0);
    while (std::abs(denominator_poly(x, c.denominator)) <= 1e-2);
    const RationalEval e = rational_backward(x, c);
    const std::string at = " (instance " + std::to_string(inst) + ")";
    record(report, e.d_input, (rational_forward(x + h, c) - rational_forward(x - h, c)) / (2 * h), "d/dx" + at);
    auto flat = c.flat();
    for (size_t j = 0; j < flat.size(); ++j) {
      const double saved = flat[j];
      flat[j] = saved + h;
      const double plus = rational_forward(x, RationalCoefficients::from_flat(c.m(), c.n(), flat));
      flat[j] = saved - h;
      const double minus = rational_forward(x, RationalCoefficients::from_flat(c.m(), c.n(), flat));
      flat[j] = saved;
      const double analytic = j <= static_cast<size_t>(c.m()) ? e.d_numerator[j]
                                                               : e.d_denominator[j - static_cast<size_t>(c.m()) - 1];
      record(report, analytic, (plus - minus) / (2 * h), "coefficient " + std::to_string(j) + at);
    }
    ++report.instances;
  }
  return report;
}

namespace {

TransformerConfig gradcheck_config(uint64_t seed) {
  SplitMix64 rng(derive_seed(seed, "gradcheck-coefficients"));
  auto cfg = TransformerConfig::uniform(2, 8, 2, 12, 8, ActivationKind::fixed_gelu());
  auto perturbed = [&] {
    auto flat = gelu_initialization().flat();
    for (auto& v : flat) v += rng.normal(0.0, 0.05);
    return ActivationKind::rational(RationalCoefficients::from_flat(5, 4, flat));
  };
  for (auto& a : cfg.activation) a = perturbed();
  cfg.pooler_activation = perturbed();
  cfg.num_classes = 3;
  cfg.init_std = 0.3;  // large enough that every path carries signal
  return cfg;
}

struct GradcheckData {
  MaskedBatch mlm;
  LabeledBatch cls;
};

GradcheckData gradcheck_data() {
  GradcheckData d;
  TokenBatch tokens;
  tokens.batch_size = 2;
  tokens.seq_len = 6;
  tokens.input_ids = {2, 5, 4, 9, 6, 3, 2, 8, 4, 3, 0, 0};
  tokens.attention_mask = {1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0};
  d.mlm.tokens = tokens;
  d.mlm.labels = {-1, 7, 11, -1, -1, -1, -1, -1, 10, -1, -1, -1};
  d.cls.tokens = tokens;
  d.cls.labels = {1, 2};
  return d;
}

template <typename T>
Tensor<T> gradcheck_loss(const TransformerModel<T>& model, const GradcheckData& d) {
  return add(model.mlm_loss(d.mlm), *model.classify(d.cls.tokens, d.cls.labels).loss);
}

}  // namespace

ModelGradcheck gradcheck_model(uint64_t seed, size_t max_entries_per_tensor, double step, double double_threshold,
                               double float_threshold) {
  const auto cfg = gradcheck_config(seed);
  const auto data = gradcheck_data();
  TransformerModel<double> dmodel(cfg, seed);
  TransformerModel<float> fmodel(cfg, seed);
  fmodel.copy_parameters_from(dmodel);

  backward(gradcheck_loss(dmodel, data));
  backward(gradcheck_loss(fmodel, data));

  ModelGradcheck out;
  out.double_precision.name = "model_double";
  out.double_precision.threshold = double_threshold;
  out.double_precision.instances = 1;
  out.float_vs_double.name = "model_float_vs_double";
  out.float_vs_double.threshold = float_threshold;
  out.float_vs_double.instances = 1;

  NoGradGuard guard;
  for (const auto& [name, param] : dmodel.parameters()) {
    Tensor<double> p = param;
    const Tensor<float> fp = fmodel.parameter(name);
    const size_t n = p.size();
    const size_t count = std::min(n, max_entries_per_tensor);
    for (size_t k = 0; k < count; ++k) {
      const size_t i = count == n ? k : k * n / count;
      const double saved = p.data()[i];
      p.data()[i] = saved + step;
      const double plus = gradcheck_loss(dmodel, data).item();
      p.data()[i] = saved - step;
      const double minus = gradcheck_loss(dmodel, data).item();
      p.data()[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const std::string where = name + "[" + std::to_string(i) + "]";
      record(out.double_precision, p.grad()[i], numeric, where);
      record(out.float_vs_double, static_cast<double>(fp.grad()[i]), numeric, where);
    }
  }
  return out;
}

}  // namespace raft
