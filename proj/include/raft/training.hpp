// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "raft/data.hpp"
#include "raft/transformer.hpp"

namespace raft {

using Model = TransformerModel<float>;

enum class DecayKind { Linear, Constant };

std::string_view to_string(DecayKind kind) noexcept;
DecayKind parse_decay_kind(std::string_view name);

struct TrainingSchedule {
  double lr_theta = 7e-4;
  double lr_raf = 5e-3;
  double warmup_ratio = 0.01;
  DecayKind theta_decay = DecayKind::Linear;
  DecayKind raf_decay = DecayKind::Constant;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  int batch_size = 32;
  int64_t total_steps = 1000;
  double grad_clip = 0.0;  // global-norm clip; 0 disables

  void validate() const;
  /// round(warmup_ratio * total_steps)
  int64_t warmup_steps() const;
};

enum class ParamGroup { Theta, Raf, Bias, ClassifierHead };

std::string_view to_string(ParamGroup group) noexcept;

/// classifier.* -> head, *.raf -> RAF, *.bias -> bias, everything else theta.
ParamGroup parameter_group(std::string_view name);
/// Weight decay applies to theta and head matrices only: never to RAF
/// coefficients, biases or LayerNorm gains.
bool receives_weight_decay(std::string_view name);

/// Linear warmup from 0 at step 0 to the peak at warmup_steps, then the
/// group's decay: Linear reaches 0 at total_steps, Constant holds the peak.
/// RAF coefficients follow lr_raf/raf_decay, every other group lr_theta/theta_decay.
double learning_rate(const TrainingSchedule& schedule, ParamGroup group, int64_t step);

enum class TuningMode { Full, FixedRAF, RAFOnly, BiasOnly, BiasSubset117 };

std::string_view to_string(TuningMode mode) noexcept;
/// full, fixed-raf, raf-only, bias-only, bias-subset
TuningMode parse_tuning_mode(std::string_view name);

/// Trainable parameters with, for partially trained tensors, a per-element
/// mask. An empty mask means the whole tensor is trainable.
struct TrainableSet {
  std::map<std::string, std::vector<uint8_t>> tensors;

  bool contains(const std::string& name) const { return tensors.count(name) != 0; }
  size_t element_count(const Model& model) const;
};

/// Resolves a mode to the parameters it updates. RAFs configured as
/// non-trainable are never included. BiasSubset117 takes bias scalars in
/// layer-major order (layers ascending, tensor names sorted inside a layer,
/// then non-layer biases by name) until it matches the number of RAF
/// coefficients in the model.
TrainableSet select_trainable(const Model& model, TuningMode mode);

/// Sets requires_grad on every parameter according to `set`.
void apply_trainable(Model& model, const TrainableSet& set);

struct AuditReport {
  TuningMode mode = TuningMode::Full;
  size_t total_parameters = 0;
  size_t trainable_parameters = 0;
  std::map<ParamGroup, size_t> group_total;
  std::map<ParamGroup, size_t> group_trainable;
  size_t num_rafs = 0;
  size_t coefficients_per_raf = 0;
  size_t raf_coefficients_trainable = 0;
  /// Count under a nine-coefficients-per-RAF convention.
  size_t raf_nine_per_raf_count = 0;
  std::vector<std::string> trainable_tensors;

  std::string to_text() const;
};

AuditReport param_audit(const Model& model, TuningMode mode);

/// Decoupled-weight-decay Adam. Moments are kept per parameter tensor.
class AdamW {
 public:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };

  /// One update of every tensor in `trainable` using its current grad.
  void update(Model& model, const TrainableSet& trainable, const TrainingSchedule& schedule, int64_t step);

  int64_t steps_taken() const noexcept { return steps_taken_; }
  const std::map<std::string, Moments>& moments() const noexcept { return moments_; }
  void restore(int64_t steps_taken, std::map<std::string, Moments> moments);

 private:
  int64_t steps_taken_ = 0;
  std::map<std::string, Moments> moments_;
};

struct StepMetrics {
  int64_t step = 0;
  double loss = 0.0;
  double lr_theta = 0.0;
  double lr_raf = 0.0;
};

class Trainer {
 public:
  /// Applies the mode to `model` (requires_grad flags); the model must
  /// outlive the trainer.
  Trainer(Model& model, TrainingSchedule schedule, TuningMode mode);

  /// Forward via `loss_fn`, backward, AdamW update. Throws DivergenceError
  /// on a non-finite loss, gradient or updated parameter.
  StepMetrics step(const std::function<Tensor<float>()>& loss_fn, int64_t step_index);
  StepMetrics step(const MaskedBatch& batch, int64_t step_index);
  StepMetrics step(const LabeledBatch& batch, int64_t step_index);

  const TrainableSet& trainable() const noexcept { return trainable_; }
  const TrainingSchedule& schedule() const noexcept { return schedule_; }
  AdamW& optimizer() noexcept { return optimizer_; }

 private:
  Model& model_;
  TrainingSchedule schedule_;
  TrainableSet trainable_;
  AdamW optimizer_;
};

struct LogRow {
  int64_t step = 0;
  std::string split;
  double loss = 0.0;
  double ppl_or_acc = 0.0;
  double lr_theta = 0.0;
  double lr_raf = 0.0;
};

/// step,split,loss,ppl_or_acc,lr_theta,lr_raf. `step` counts completed
/// updates; the rates are those applied in update step - 1 (0-based).
std::string log_csv(const std::vector<LogRow>& rows);

struct PretrainOptions {
  uint64_t seed = 0;
  double validation_fraction = 0.05;
  size_t validation_batches = 8;
  int64_t eval_every = 100;
  int64_t log_every = 1;
  MaskingPolicy masking;
  std::string out_dir;  // when set: log.csv, final.ckpt, best.ckpt
};

struct PretrainResult {
  Model final_model;
  Model best_model;
  std::vector<LogRow> log;
  double initial_validation_loss = 0.0;
  double final_validation_loss = 0.0;
  double best_validation_loss = 0.0;
};

/// Token-weighted mean MLM loss over fixed pre-masked batches.
double evaluate_mlm(const Model& model, const std::vector<MaskedBatch>& batches);

/// Validation batches masked once from a seed derived from `seed`, so every
/// model trained with the same seed is scored on identical masks.
std::vector<MaskedBatch> make_validation_batches(const MlmCorpus& corpus, const Vocab& vocab, size_t batch_size,
                                                 size_t max_batches, uint64_t seed, const MaskingPolicy& masking = {});

/// Dynamic-masking MLM training of `model` for schedule.total_steps steps.
/// Throws DivergenceError (after writing the partial log when out_dir is
/// set).
PretrainResult pretrain(const MlmCorpus& corpus, const Vocab& vocab, Model model, const TrainingSchedule& schedule,
                        const PretrainOptions& options);
PretrainResult pretrain(const MlmCorpus& corpus, const Vocab& vocab, const TransformerConfig& config,
                        const TrainingSchedule& schedule, const PretrainOptions& options);

struct FinetuneOptions {
  uint64_t seed = 0;
  int epochs = 20;
  int patience = 10;
  size_t seq_len = 64;
  std::string out_dir;  // when set: log.csv, best.ckpt
};

struct FinetuneResult {
  Model best_model;
  Model final_model;
  std::vector<LogRow> log;
  std::vector<double> dev_accuracy;  // one per epoch run
  double best_dev_accuracy = 0.0;
  int best_epoch = -1;
  int epochs_run = 0;
};

struct ClassificationScore {
  double loss = 0.0;
  double accuracy = 0.0;
};

ClassificationScore evaluate_classification(const Model& model, const TaskDataset& data,
                                            const std::vector<size_t>& indices, const Vocab& vocab, size_t seq_len,
                                            size_t batch_size);

/// Trains a classifier on split.train and early-stops on split.dev
/// accuracy. A classification head is attached when the model has none or
/// the class count differs. schedule.total_steps is derived from the
/// epoch count and the training-set size.
FinetuneResult finetune(Model model, const Vocab& vocab, const TaskDataset& data, const DataSplit& split,
                        TuningMode mode, TrainingSchedule schedule, const FinetuneOptions& options);

}  // namespace raft
