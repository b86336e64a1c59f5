// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "raft/data.hpp"
#include "raft/training.hpp"
#include "raft/transformer.hpp"

namespace raft {

struct ModelSection {
  int layers = 4;
  int hidden = 128;
  int heads = 4;
  int ffn = 0;  // 0 = 4 * hidden
  int max_seq_len = 64;
  std::string activation = "rational";  // rational | gelu | relu
  std::string init = "gelu";            // gelu | identity | <coefficient file>
  bool trainable_raf = true;
  InitScheme init_scheme = InitScheme::Standard;
};

struct DataSection {
  std::string corpus;  // empty = synthetic
  size_t synthetic_bytes = 1 << 20;
  TokenizerMode tokenizer = TokenizerMode::Char;
  size_t vocab_size = 256;
  size_t seq_len = 64;
  double validation_fraction = 0.05;
  std::string task;  // empty = synthetic two-class task
  size_t synthetic_examples = 1000;
  std::optional<size_t> size_cap;
  double train_fraction = 0.75;
};

struct PretrainSection {
  int64_t eval_every = 100;
  int64_t log_every = 10;
  size_t validation_batches = 8;
};

struct FinetuneSection {
  int epochs = 20;
  int patience = 10;
  TuningMode mode = TuningMode::Full;
  TrainingSchedule schedule = default_schedule();

  static TrainingSchedule default_schedule();
};

/// Everything a CLI run needs. The file is JSON; absent keys keep their
/// defaults and unknown keys are rejected.
struct RunConfig {
  uint64_t seed = 0;
  ModelSection model;
  TrainingSchedule schedule;  // pretraining
  DataSection data;
  PretrainSection pretrain;
  FinetuneSection finetune;

  RunConfig();
};

/// Throws FormatError on malformed JSON, wrong types or unknown keys.
RunConfig parse_run_config(std::string_view json);
RunConfig load_run_config(const std::string& path);
std::string to_json(const RunConfig& config);

/// Activation described by the model section.
ActivationKind make_activation(const ModelSection& model);
TransformerConfig make_transformer_config(const RunConfig& config, int vocab_size);

}  // namespace raft
