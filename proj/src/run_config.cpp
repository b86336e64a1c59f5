// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#include "raft/run_config.hpp"

#include <fstream>
#include <iterator>
#include <json.hpp>
#include <set>

#include "raft/errors.hpp"
#include "raft/fitting.hpp"
#include "raft/rational.hpp"

namespace raft {

using nlohmann::json;

TrainingSchedule FinetuneSection::default_schedule() {
  TrainingSchedule s;
  s.lr_theta = 1e-4;
  s.lr_raf = 1e-3;
  s.warmup_ratio = 0.1;
  s.batch_size = 32;
  s.total_steps = 1;  // derived from epochs at run time
  return s;
}

// Desk-scale pretraining: 500 steps of 32 sequences at a higher peak rate
// than the large-batch default.
RunConfig::RunConfig() {
  schedule.batch_size = 32;
  schedule.total_steps = 500;
  schedule.lr_theta = 1e-3;
}

namespace {

void check_keys(const json& j, std::string_view section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw FormatError("run config: '" + std::string(section) + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (ok.count(key) == 0) throw FormatError("run config: unknown key '" + key + "' in " + std::string(section));
}

template <typename U>
void read(const json& j, const char* key, U& out) {
  if (j.contains(key)) out = j.at(key).get<U>();
}

void read_schedule(const json& j, std::string_view section, TrainingSchedule& s) {
  check_keys(j, section,
             {"lr_theta", "lr_raf", "warmup_ratio", "theta_decay", "raf_decay", "beta1", "beta2", "epsilon",
              "weight_decay", "batch_size", "total_steps", "grad_clip"});
  read(j, "lr_theta", s.lr_theta);
  read(j, "lr_raf", s.lr_raf);
  read(j, "warmup_ratio", s.warmup_ratio);
  if (j.contains("theta_decay")) s.theta_decay = parse_decay_kind(j.at("theta_decay").get<std::string>());
  if (j.contains("raf_decay")) s.raf_decay = parse_decay_kind(j.at("raf_decay").get<std::string>());
  read(j, "beta1", s.beta1);
  read(j, "beta2", s.beta2);
  read(j, "epsilon", s.epsilon);
  read(j, "weight_decay", s.weight_decay);
  read(j, "batch_size", s.batch_size);
  read(j, "total_steps", s.total_steps);
  read(j, "grad_clip", s.grad_clip);
}

json schedule_json(const TrainingSchedule& s) {
  return {{"lr_theta", s.lr_theta},         {"lr_raf", s.lr_raf},
          {"warmup_ratio", s.warmup_ratio}, {"theta_decay", std::string(to_string(s.theta_decay))},
          {"raf_decay", std::string(to_string(s.raf_decay))},
          {"beta1", s.beta1},               {"beta2", s.beta2},
          {"epsilon", s.epsilon},           {"weight_decay", s.weight_decay},
          {"batch_size", s.batch_size},     {"total_steps", s.total_steps},
          {"grad_clip", s.grad_clip}};
}

InitScheme parse_init_scheme(const std::string& name) {
  if (name == "standard") return InitScheme::Standard;
  if (name == "residual-scaled") return InitScheme::ResidualScaled;
  throw PreconditionError("unknown init scheme '" + name + "' (standard, residual-scaled)");
}

std::string init_scheme_name(InitScheme s) { return s == InitScheme::Standard ? "standard" : "residual-scaled"; }

}  // namespace

RunConfig parse_run_config(std::string_view text) {
  RunConfig c;
  try {
    const json j = json::parse(text);
    check_keys(j, "top level", {"seed", "model", "schedule", "data", "pretrain", "finetune"});
    read(j, "seed", c.seed);
    if (j.contains("model")) {
      const auto& m = j.at("model");
      check_keys(m, "model",
                 {"layers", "hidden", "heads", "ffn", "max_seq_len", "activation", "init", "trainable_raf",
                  "init_scheme"});
      read(m, "layers", c.model.layers);
      read(m, "hidden", c.model.hidden);
      read(m, "heads", c.model.heads);
      read(m, "ffn", c.model.ffn);
      read(m, "max_seq_len", c.model.max_seq_len);
      read(m, "activation", c.model.activation);
      read(m, "init", c.model.init);
      read(m, "trainable_raf", c.model.trainable_raf);
      if (m.contains("init_scheme")) c.model.init_scheme = parse_init_scheme(m.at("init_scheme").get<std::string>());
    }
    if (j.contains("schedule")) read_schedule(j.at("schedule"), "schedule", c.schedule);
    if (j.contains("data")) {
      const auto& d = j.at("data");
      check_keys(d, "data",
                 {"corpus", "synthetic_bytes", "tokenizer", "vocab_size", "seq_len", "validation_fraction", "task",
                  "synthetic_examples", "size_cap", "train_fraction"});
      read(d, "corpus", c.data.corpus);
      read(d, "synthetic_bytes", c.data.synthetic_bytes);
      if (d.contains("tokenizer")) c.data.tokenizer = parse_tokenizer_mode(d.at("tokenizer").get<std::string>());
      read(d, "vocab_size", c.data.vocab_size);
      read(d, "seq_len", c.data.seq_len);
      read(d, "validation_fraction", c.data.validation_fraction);
      read(d, "task", c.data.task);
      read(d, "synthetic_examples", c.data.synthetic_examples);
      if (d.contains("size_cap") && !d.at("size_cap").is_null()) c.data.size_cap = d.at("size_cap").get<size_t>();
      read(d, "train_fraction", c.data.train_fraction);
    }
    if (j.contains("pretrain")) {
      const auto& p = j.at("pretrain");
      check_keys(p, "pretrain", {"eval_every", "log_every", "validation_batches"});
      read(p, "eval_every", c.pretrain.eval_every);
      read(p, "log_every", c.pretrain.log_every);
      read(p, "validation_batches", c.pretrain.validation_batches);
    }
    if (j.contains("finetune")) {
      const auto& f = j.at("finetune");
      check_keys(f, "finetune", {"epochs", "patience", "mode", "schedule"});
      read(f, "epochs", c.finetune.epochs);
      read(f, "patience", c.finetune.patience);
      if (f.contains("mode")) c.finetune.mode = parse_tuning_mode(f.at("mode").get<std::string>());
      if (f.contains("schedule")) read_schedule(f.at("schedule"), "finetune.schedule", c.finetune.schedule);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("run config: ") + e.what());
  } catch (const PreconditionError& e) {
    throw FormatError(std::string("run config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open run config " + path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

std::string to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["model"] = {{"layers", c.model.layers},
                {"hidden", c.model.hidden},
                {"heads", c.model.heads},
                {"ffn", c.model.ffn},
                {"max_seq_len", c.model.max_seq_len},
                {"activation", c.model.activation},
                {"init", c.model.init},
                {"trainable_raf", c.model.trainable_raf},
                {"init_scheme", init_scheme_name(c.model.init_scheme)}};
  j["schedule"] = schedule_json(c.schedule);
  j["data"] = {{"corpus", c.data.corpus},
               {"synthetic_bytes", c.data.synthetic_bytes},
               {"tokenizer", std::string(to_string(c.data.tokenizer))},
               {"vocab_size", c.data.vocab_size},
               {"seq_len", c.data.seq_len},
               {"validation_fraction", c.data.validation_fraction},
               {"task", c.data.task},
               {"synthetic_examples", c.data.synthetic_examples},
               {"size_cap", c.data.size_cap ? json(*c.data.size_cap) : json(nullptr)},
               {"train_fraction", c.data.train_fraction}};
  j["pretrain"] = {{"eval_every", c.pretrain.eval_every},
                   {"log_every", c.pretrain.log_every},
                   {"validation_batches", c.pretrain.validation_batches}};
  j["finetune"] = {{"epochs", c.finetune.epochs},
                   {"patience", c.finetune.patience},
                   {"mode", std::string(to_string(c.finetune.mode))},
                   {"schedule", schedule_json(c.finetune.schedule)}};
  return j.dump(2);
}

ActivationKind make_activation(const ModelSection& m) {
  if (m.activation == "gelu") return ActivationKind::fixed_gelu();
  if (m.activation == "relu") return ActivationKind::fixed_relu();
  if (m.activation != "rational")
    throw PreconditionError("unknown activation '" + m.activation + "' (rational, gelu, relu)");
  RationalCoefficients c;
  if (m.init == "gelu")
    c = gelu_initialization();
  else if (m.init == "identity")
    c = RationalCoefficients::identity();
  else
    c = load_coefficients(m.init);
  return ActivationKind::rational(std::move(c), m.trainable_raf);
}

TransformerConfig make_transformer_config(const RunConfig& c, int vocab_size) {
  auto cfg = TransformerConfig::uniform(c.model.layers, c.model.hidden, c.model.heads, vocab_size,
                                        c.model.max_seq_len, make_activation(c.model));
  if (c.model.ffn > 0) cfg.ffn_size = c.model.ffn;
  cfg.init_scheme = c.model.init_scheme;
  cfg.validate();
  return cfg;
}

}  // namespace raft
