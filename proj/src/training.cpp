// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#include "raft/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "raft/checkpoint.hpp"
#include "raft/errors.hpp"
#include "raft/random.hpp"

namespace raft {

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

bool is_raf(std::string_view name) { return ends_with(name, ".raf"); }

// -1 for non-layer parameters.
int layer_index(std::string_view name) {
  if (!starts_with(name, "layer.")) return -1;
  name.remove_prefix(6);
  return std::stoi(std::string(name.substr(0, name.find('.'))));
}

bool raf_is_trainable(const TransformerConfig& config, std::string_view name) {
  if (name == "pooler.raf") return config.pooler_activation.trainable;
  const int layer = layer_index(name);
  return layer >= 0 && config.activation.at(static_cast<size_t>(layer)).trainable;
}

void add_whole(TrainableSet& set, const std::string& name) { set.tensors[name] = {}; }

void add_head(TrainableSet& set, const Model& model) {
  for (const auto& [name, t] : model.parameters())
    if (parameter_group(name) == ParamGroup::ClassifierHead) add_whole(set, name);
}

}  // namespace

std::string_view to_string(DecayKind kind) noexcept { return kind == DecayKind::Linear ? "linear" : "constant"; }

DecayKind parse_decay_kind(std::string_view name) {
  if (name == "linear") return DecayKind::Linear;
  if (name == "constant") return DecayKind::Constant;
  throw PreconditionError("unknown decay '" + std::string(name) + "' (linear, constant)");
}

void TrainingSchedule::validate() const {
  auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if (!finite_nonneg(lr_theta) || !finite_nonneg(lr_raf)) throw PreconditionError("learning rates must be >= 0");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw PreconditionError("warmup_ratio must be in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw PreconditionError("Adam betas must be in [0, 1)");
  if (!(epsilon > 0.0)) throw PreconditionError("epsilon must be positive");
  if (!finite_nonneg(weight_decay) || !finite_nonneg(grad_clip))
    throw PreconditionError("weight_decay and grad_clip must be >= 0");
  if (batch_size < 1) throw PreconditionError("batch_size must be positive");
  if (total_steps < 1) throw PreconditionError("total_steps must be positive");
}

int64_t TrainingSchedule::warmup_steps() const {
  return static_cast<int64_t>(std::llround(warmup_ratio * static_cast<double>(total_steps)));
}

std::string_view to_string(ParamGroup group) noexcept {
  switch (group) {
    case ParamGroup::Theta: return "theta";
    case ParamGroup::Raf: return "raf";
    case ParamGroup::Bias: return "bias";
    case ParamGroup::ClassifierHead: return "head";
  }
  return "?";
}

ParamGroup parameter_group(std::string_view name) {
  if (starts_with(name, "classifier.")) return ParamGroup::ClassifierHead;
  if (is_raf(name)) return ParamGroup::Raf;
  if (ends_with(name, ".bias")) return ParamGroup::Bias;
  return ParamGroup::Theta;
}

bool receives_weight_decay(std::string_view name) {
  return !is_raf(name) && !ends_with(name, ".bias") && name.find(".ln.") == std::string_view::npos;
}

double learning_rate(const TrainingSchedule& schedule, ParamGroup group, int64_t step) {
  const bool raf = group == ParamGroup::Raf;
  const double peak = raf ? schedule.lr_raf : schedule.lr_theta;
  const DecayKind decay = raf ? schedule.raf_decay : schedule.theta_decay;
  const int64_t warmup = schedule.warmup_steps();
  const int64_t total = schedule.total_steps;
  if (step < 0) return 0.0;
  // Interpolate in extended precision so the result is rounded to double once.
  const auto wide = static_cast<long double>(peak);
  if (step < warmup) return static_cast<double>(wide * step / warmup);
  if (decay == DecayKind::Constant) return peak;
  if (total <= warmup) return peak;
  if (step >= total) return 0.0;
  return static_cast<double>(wide * (total - step) / (total - warmup));
}

std::string_view to_string(TuningMode mode) noexcept {
  switch (mode) {
    case TuningMode::Full: return "full";
    case TuningMode::FixedRAF: return "fixed-raf";
    case TuningMode::RAFOnly: return "raf-only";
    case TuningMode::BiasOnly: return "bias-only";
    case TuningMode::BiasSubset117: return "bias-subset";
  }
  return "?";
}

TuningMode parse_tuning_mode(std::string_view name) {
  for (auto m : {TuningMode::Full, TuningMode::FixedRAF, TuningMode::RAFOnly, TuningMode::BiasOnly,
                 TuningMode::BiasSubset117})
    if (to_string(m) == name) return m;
  throw PreconditionError("unknown tuning mode '" + std::string(name) +
                          "' (full, fixed-raf, raf-only, bias-only, bias-subset)");
}

size_t TrainableSet::element_count(const Model& model) const {
  size_t n = 0;
  for (const auto& [name, mask] : tensors) {
    if (mask.empty())
      n += model.parameter(name).size();
    else
      n += static_cast<size_t>(std::count(mask.begin(), mask.end(), uint8_t{1}));
  }
  return n;
}

TrainableSet select_trainable(const Model& model, TuningMode mode) {
  const auto& config = model.config();
  TrainableSet set;
  switch (mode) {
    case TuningMode::Full:
    case TuningMode::FixedRAF:
      for (const auto& [name, t] : model.parameters()) {
        if (is_raf(name) && (mode == TuningMode::FixedRAF || !raf_is_trainable(config, name))) continue;
        add_whole(set, name);
      }
      break;
    case TuningMode::RAFOnly:
      for (const auto& name : model.raf_names())
        if (raf_is_trainable(config, name)) add_whole(set, name);
      add_head(set, model);
      break;
    case TuningMode::BiasOnly:
      for (const auto& [name, t] : model.parameters())
        if (parameter_group(name) == ParamGroup::Bias) add_whole(set, name);
      add_head(set, model);
      break;
    case TuningMode::BiasSubset117: {
      size_t budget = 0;
      for (const auto& name : model.raf_names()) budget += model.parameter(name).size();
      std::vector<std::string> order;
      for (const auto& [name, t] : model.parameters())
        if (parameter_group(name) == ParamGroup::Bias) order.push_back(name);
      std::stable_sort(order.begin(), order.end(), [](const std::string& a, const std::string& b) {
        const int la = layer_index(a), lb = layer_index(b);
        const int ka = la < 0 ? std::numeric_limits<int>::max() : la;
        const int kb = lb < 0 ? std::numeric_limits<int>::max() : lb;
        return ka < kb;  // names arrive sorted, so ties stay lexicographic
      });
      for (const auto& name : order) {
        if (budget == 0) break;
        const size_t size = model.parameter(name).size();
        if (size <= budget) {
          add_whole(set, name);
          budget -= size;
        } else {
          std::vector<uint8_t> mask(size, 0);
          std::fill_n(mask.begin(), budget, uint8_t{1});
          set.tensors[name] = std::move(mask);
          budget = 0;
        }
      }
      add_head(set, model);
      break;
    }
  }
  return set;
}

void apply_trainable(Model& model, const TrainableSet& set) {
  for (const auto& [name, param] : model.parameters()) {
    Tensor<float> t = param;
    t.set_requires_grad(set.contains(name));
  }
}

std::string AuditReport::to_text() const {
  std::ostringstream out;
  out << "mode: " << to_string(mode) << "\n";
  out << "total parameters: " << total_parameters << "\n";
  out << "trainable parameters: " << trainable_parameters << "\n";
  for (const auto& [group, total] : group_total) {
    const auto it = group_trainable.find(group);
    out << "  " << to_string(group) << ": " << (it == group_trainable.end() ? 0 : it->second) << " / " << total
        << "\n";
  }
  out << "rational activations: " << num_rafs << " x " << coefficients_per_raf
      << " coefficients = " << num_rafs * coefficients_per_raf << "\n";
  out << "trainable rational coefficients: " << raf_coefficients_trainable << "\n";
  out << "at 9 coefficients per activation: " << raf_nine_per_raf_count << "\n";
  out << "trainable tensors:\n";
  for (const auto& name : trainable_tensors) out << "  " << name << "\n";
  return out.str();
}

AuditReport param_audit(const Model& model, TuningMode mode) {
  const TrainableSet set = select_trainable(model, mode);
  AuditReport r;
  r.mode = mode;
  for (const auto& [name, t] : model.parameters()) {
    const ParamGroup g = parameter_group(name);
    r.total_parameters += t.size();
    r.group_total[g] += t.size();
    r.group_trainable[g] += 0;
    const auto it = set.tensors.find(name);
    if (it == set.tensors.end()) continue;
    const size_t n = it->second.empty() ? t.size()
                                        : static_cast<size_t>(std::count(it->second.begin(), it->second.end(), 1));
    r.trainable_parameters += n;
    r.group_trainable[g] += n;
    if (g == ParamGroup::Raf) r.raf_coefficients_trainable += n;
    r.trainable_tensors.push_back(name);
  }
  const auto rafs = model.raf_names();
  r.num_rafs = rafs.size();
  r.coefficients_per_raf = rafs.empty() ? 0 : model.parameter(rafs.front()).size();
  r.raf_nine_per_raf_count = 9 * r.num_rafs;
  return r;
}

// ---------------------------------------------------------------------------
// AdamW

void AdamW::update(Model& model, const TrainableSet& trainable, const TrainingSchedule& schedule, int64_t step) {
  ++steps_taken_;
  const double t = static_cast<double>(steps_taken_);
  const double bc1 = 1.0 - std::pow(schedule.beta1, t);
  const double bc2 = 1.0 - std::pow(schedule.beta2, t);

  double clip = 1.0;
  if (schedule.grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& [name, mask] : trainable.tensors) {
      const Tensor<float> p = model.parameter(name);
      if (!p.has_grad()) continue;
      const auto g = p.grad();
      for (size_t i = 0; i < g.size(); ++i)
        if (mask.empty() || mask[i]) sq += static_cast<double>(g[i]) * g[i];
    }
    const double norm = std::sqrt(sq);
    if (norm > schedule.grad_clip) clip = schedule.grad_clip / norm;
  }

  for (const auto& [name, mask] : trainable.tensors) {
    Tensor<float> p = model.parameter(name);
    if (!p.has_grad()) continue;
    const double lr = learning_rate(schedule, parameter_group(name), step);
    const double decay = receives_weight_decay(name) ? lr * schedule.weight_decay : 0.0;
    auto& mom = moments_[name];
    if (mom.m.size() != p.size()) {
      mom.m.assign(p.size(), 0.0);
      mom.v.assign(p.size(), 0.0);
    }
    auto data = p.data();
    const auto grad = p.grad();
    for (size_t i = 0; i < data.size(); ++i) {
      if (!mask.empty() && !mask[i]) continue;
      const double g = clip * static_cast<double>(grad[i]);
      double w = static_cast<double>(data[i]);
      w -= decay * w;
      mom.m[i] = schedule.beta1 * mom.m[i] + (1.0 - schedule.beta1) * g;
      mom.v[i] = schedule.beta2 * mom.v[i] + (1.0 - schedule.beta2) * g * g;
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      w -= lr * mhat / (std::sqrt(vhat) + schedule.epsilon);
      data[i] = static_cast<float>(w);
    }
  }
}

void AdamW::restore(int64_t steps_taken, std::map<std::string, Moments> moments) {
  if (steps_taken < 0) throw PreconditionError("AdamW::restore: negative step count");
  steps_taken_ = steps_taken;
  moments_ = std::move(moments);
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(Model& model, TrainingSchedule schedule, TuningMode mode)
    : model_(model), schedule_(std::move(schedule)), trainable_(select_trainable(model, mode)) {
  schedule_.validate();
  apply_trainable(model_, trainable_);
}

StepMetrics Trainer::step(const std::function<Tensor<float>()>& loss_fn, int64_t step_index) {
  for (const auto& [name, mask] : trainable_.tensors) {
    Tensor<float> p = model_.parameter(name);
    p.zero_grad();
  }
  const Tensor<float> loss = loss_fn();
  const double value = static_cast<double>(loss.item());
  if (!std::isfinite(value)) throw DivergenceError(step_index, "non-finite loss");
  backward(loss);
  for (const auto& [name, mask] : trainable_.tensors) {
    const Tensor<float> p = model_.parameter(name);
    for (float g : p.grad())
      if (!std::isfinite(g)) throw DivergenceError(step_index, "non-finite gradient in " + name);
  }
  optimizer_.update(model_, trainable_, schedule_, step_index);
  for (const auto& [name, mask] : trainable_.tensors) {
    const Tensor<float> p = model_.parameter(name);
    for (float w : p.data())
      if (!std::isfinite(w)) throw DivergenceError(step_index, "non-finite value in " + name);
  }
  return {step_index, value, learning_rate(schedule_, ParamGroup::Theta, step_index),
          learning_rate(schedule_, ParamGroup::Raf, step_index)};
}

StepMetrics Trainer::step(const MaskedBatch& batch, int64_t step_index) {
  return step([&] { return model_.mlm_loss(batch); }, step_index);
}

StepMetrics Trainer::step(const LabeledBatch& batch, int64_t step_index) {
  return step([&] { return *model_.classify(batch.tokens, batch.labels).loss; }, step_index);
}

std::string log_csv(const std::vector<LogRow>& rows) {
  std::string out = "step,split,loss,ppl_or_acc,lr_theta,lr_raf\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%lld,%s,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(r.step), r.split.c_str(),
                  r.loss, r.ppl_or_acc, r.lr_theta, r.lr_raf);
    out += buf;
  }
  return out;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::filesystem::path ensure_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// Pretraining

double evaluate_mlm(const Model& model, const std::vector<MaskedBatch>& batches) {
  NoGradGuard guard;
  double total = 0.0;
  size_t count = 0;
  for (const auto& b : batches) {
    const size_t n = b.num_masked();
    if (n == 0) continue;
    total += static_cast<double>(model.mlm_loss(b).item()) * static_cast<double>(n);
    count += n;
  }
  if (count == 0) throw UndefinedLossError("evaluate_mlm: no masked positions");
  return total / static_cast<double>(count);
}

std::vector<MaskedBatch> make_validation_batches(const MlmCorpus& corpus, const Vocab& vocab, size_t batch_size,
                                                 size_t max_batches, uint64_t seed, const MaskingPolicy& masking) {
  if (corpus.validation.empty()) throw PreconditionError("corpus has no validation chunks");
  if (batch_size == 0 || max_batches == 0) throw PreconditionError("validation batch size and count must be positive");
  SplitMix64 rng(derive_seed(seed, "validation"));
  std::vector<MaskedBatch> out;
  for (size_t start = 0; start < corpus.validation.size() && out.size() < max_batches; start += batch_size) {
    std::vector<size_t> idx;
    for (size_t i = start; i < std::min(start + batch_size, corpus.validation.size()); ++i) idx.push_back(i);
    out.push_back(make_mlm_batch(corpus.validation, idx, corpus.seq_len, vocab, rng, masking));
  }
  return out;
}

PretrainResult pretrain(const MlmCorpus& corpus, const Vocab& vocab, Model model, const TrainingSchedule& schedule,
                        const PretrainOptions& options) {
  schedule.validate();
  if (corpus.train.empty()) throw PreconditionError("corpus has no training chunks");
  if (options.eval_every < 1 || options.log_every < 1) throw PreconditionError("eval_every and log_every must be positive");
  const auto bs = static_cast<size_t>(schedule.batch_size);
  const auto validation =
      make_validation_batches(corpus, vocab, bs, options.validation_batches, options.seed, options.masking);

  Trainer trainer(model, schedule, TuningMode::Full);
  SplitMix64 mask_rng(derive_seed(options.seed, "masking"));
  const uint64_t order_seed = derive_seed(options.seed, "order");

  std::vector<LogRow> log;
  // Rows carry the rates of the most recent update (step - 1).
  auto lr_row = [&](int64_t step, std::string split, double loss, double metric) {
    const int64_t applied = std::max<int64_t>(step - 1, 0);
    log.push_back({step, std::move(split), loss, metric, learning_rate(schedule, ParamGroup::Theta, applied),
                   learning_rate(schedule, ParamGroup::Raf, applied)});
  };

  const double initial = evaluate_mlm(model, validation);
  lr_row(0, "validation", initial, std::exp(initial));
  double best = initial;
  double last = initial;
  Model best_model = model.clone();

  std::vector<size_t> order = epoch_order(corpus.train.size(), order_seed, 0);
  uint64_t epoch = 0;
  size_t cursor = 0;
  try {
    for (int64_t s = 0; s < schedule.total_steps; ++s) {
      std::vector<size_t> idx;
      while (idx.size() < bs) {
        if (cursor == order.size()) {
          order = epoch_order(corpus.train.size(), order_seed, ++epoch);
          cursor = 0;
        }
        idx.push_back(order[cursor++]);
      }
      const MaskedBatch batch = make_mlm_batch(corpus.train, idx, corpus.seq_len, vocab, mask_rng, options.masking);
      const StepMetrics m = trainer.step(batch, s);
      if ((s + 1) % options.log_every == 0) lr_row(s + 1, "train", m.loss, std::exp(m.loss));
      if ((s + 1) % options.eval_every == 0 || s + 1 == schedule.total_steps) {
        last = evaluate_mlm(model, validation);
        lr_row(s + 1, "validation", last, std::exp(last));
        if (last < best) {
          best = last;
          best_model = model.clone();
        }
      }
    }
  } catch (const DivergenceError&) {
    if (!options.out_dir.empty()) write_text(ensure_dir(options.out_dir) / "log.csv", log_csv(log));
    throw;
  }

  if (!options.out_dir.empty()) {
    const auto dir = ensure_dir(options.out_dir);
    write_text(dir / "log.csv", log_csv(log));
    save_checkpoint((dir / "final.ckpt").string(), model, vocab, mask_rng.state(), &trainer.optimizer());
    save_checkpoint((dir / "best.ckpt").string(), best_model, vocab, mask_rng.state());
  }
  return PretrainResult{std::move(model), std::move(best_model), std::move(log), initial, last, best};
}

PretrainResult pretrain(const MlmCorpus& corpus, const Vocab& vocab, const TransformerConfig& config,
                        const TrainingSchedule& schedule, const PretrainOptions& options) {
  return pretrain(corpus, vocab, Model(config, derive_seed(options.seed, "init")), schedule, options);
}

// ---------------------------------------------------------------------------
// Fine-tuning

ClassificationScore evaluate_classification(const Model& model, const TaskDataset& data,
                                            const std::vector<size_t>& indices, const Vocab& vocab, size_t seq_len,
                                            size_t batch_size) {
  if (indices.empty()) throw PreconditionError("evaluate_classification: no examples");
  if (batch_size == 0) throw PreconditionError("evaluate_classification: batch_size must be positive");
  NoGradGuard guard;
  double loss = 0.0;
  size_t correct = 0;
  for (size_t start = 0; start < indices.size(); start += batch_size) {
    const size_t end = std::min(start + batch_size, indices.size());
    const std::span<const size_t> idx(indices.data() + start, end - start);
    const LabeledBatch batch = make_classification_batch(data, idx, vocab, seq_len);
    const auto out = model.classify(batch.tokens, batch.labels);
    loss += static_cast<double>(out.loss->item()) * static_cast<double>(idx.size());
    const size_t classes = out.logits.dim(1);
    const auto logits = out.logits.data();
    for (size_t r = 0; r < idx.size(); ++r) {
      const auto row = logits.subspan(r * classes, classes);
      const auto pred = static_cast<int32_t>(std::max_element(row.begin(), row.end()) - row.begin());
      correct += pred == batch.labels[r];
    }
  }
  const auto n = static_cast<double>(indices.size());
  return {loss / n, static_cast<double>(correct) / n};
}

FinetuneResult finetune(Model model, const Vocab& vocab, const TaskDataset& data, const DataSplit& split,
                        TuningMode mode, TrainingSchedule schedule, const FinetuneOptions& options) {
  if (split.train.empty() || split.dev.empty()) throw PreconditionError("finetune needs non-empty train and dev splits");
  if (options.epochs < 1 || options.patience < 1) throw PreconditionError("epochs and patience must be positive");
  if (data.num_classes() < 2) throw PreconditionError("finetune needs at least two classes");
  const auto classes = static_cast<int>(data.num_classes());
  if (!model.has_classifier() || model.config().num_classes != classes)
    model.attach_classifier(classes, derive_seed(options.seed, "classifier"));

  const auto bs = static_cast<size_t>(std::max(schedule.batch_size, 1));
  const auto steps_per_epoch = static_cast<int64_t>((split.train.size() + bs - 1) / bs);
  schedule.total_steps = steps_per_epoch * options.epochs;
  Trainer trainer(model, schedule, mode);
  const uint64_t order_seed = derive_seed(options.seed, "finetune-order");

  std::vector<LogRow> log;
  std::vector<double> dev_accuracy;
  double best_acc = -1.0;
  int best_epoch = -1;
  int since_best = 0;
  int epochs_run = 0;
  Model best_model = model.clone();
  int64_t step = 0;

  try {
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
      const auto perm = epoch_order(split.train.size(), order_seed, static_cast<uint64_t>(epoch));
      for (size_t start = 0; start < perm.size(); start += bs) {
        std::vector<size_t> idx;
        for (size_t i = start; i < std::min(start + bs, perm.size()); ++i) idx.push_back(split.train[perm[i]]);
        const LabeledBatch batch = make_classification_batch(data, idx, vocab, options.seq_len);
        trainer.step(batch, step++);
      }
      ++epochs_run;
      const double lt = learning_rate(schedule, ParamGroup::Theta, step - 1);
      const double lr = learning_rate(schedule, ParamGroup::Raf, step - 1);
      const ClassificationScore train_score =
          evaluate_classification(model, data, split.train, vocab, options.seq_len, bs);
      const ClassificationScore dev = evaluate_classification(model, data, split.dev, vocab, options.seq_len, bs);
      log.push_back({step, "train", train_score.loss, train_score.accuracy, lt, lr});
      log.push_back({step, "dev", dev.loss, dev.accuracy, lt, lr});
      dev_accuracy.push_back(dev.accuracy);
      if (dev.accuracy > best_acc) {
        best_acc = dev.accuracy;
        best_epoch = epoch;
        best_model = model.clone();
        since_best = 0;
      } else if (++since_best >= options.patience) {
        break;
      }
    }
  } catch (const DivergenceError&) {
    if (!options.out_dir.empty()) write_text(ensure_dir(options.out_dir) / "log.csv", log_csv(log));
    throw;
  }

  if (!options.out_dir.empty()) {
    const auto dir = ensure_dir(options.out_dir);
    write_text(dir / "log.csv", log_csv(log));
    save_checkpoint((dir / "best.ckpt").string(), best_model, vocab, split.seed);
  }
  FinetuneResult result{std::move(best_model), std::move(model), std::move(log), std::move(dev_accuracy),
                        best_acc, best_epoch, epochs_run};
  return result;
}

}  // namespace raft
