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

// Binary layout, all integers little-endian:
//   "RAFTCKPT" | u32 version | u64 meta_len | meta JSON {config, vocab}
//   u64 rng_state | u64 tensor_count | tensors sorted by name:
//     u32 name_len | name | u8 dtype (0 = f32, 1 = f64) | u32 rank | u64 dims[rank]
//     | u64 nbytes | data
//   u8 has_optimizer [| i64 steps_taken | u64 count | per tensor: name, m, v as f64 tensors]
//   u64 FNV-1a of every preceding byte
inline constexpr uint32_t kCheckpointVersion = 1;

struct OptimizerState {
  int64_t steps_taken = 0;
  std::map<std::string, AdamW::Moments> moments;
};

struct Checkpoint {
  Model model;
  Vocab vocab;
  uint64_t rng_state = 0;
  std::optional<OptimizerState> optimizer;
};

std::string serialize_checkpoint(const Model& model, const Vocab& vocab, uint64_t rng_state,
                                 const AdamW* optimizer = nullptr);
/// Throws FormatError on a bad magic, unknown version, truncation or
/// checksum mismatch.
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, const Model& model, const Vocab& vocab, uint64_t rng_state,
                     const AdamW* optimizer = nullptr);
Checkpoint load_checkpoint(const std::string& path);
/// As above, and throws ConfigMismatchError unless the stored architecture
/// matches `expected`.
Checkpoint load_checkpoint(const std::string& path, const TransformerConfig& expected);

}  // namespace raft
