// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "raft/random.hpp"

namespace raft {

enum class TokenizerMode { Char, Word };

std::string_view to_string(TokenizerMode mode) noexcept;
TokenizerMode parse_tokenizer_mode(std::string_view name);

/// Frequency-ranked vocabulary with five special tokens at ids 0..4.
class Vocab {
 public:
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kUnk = 1;
  static constexpr int32_t kCls = 2;
  static constexpr int32_t kSep = 3;
  static constexpr int32_t kMask = 4;
  static constexpr size_t kNumSpecial = 5;

  /// Tokens sorted by descending count, ties broken by byte order, after
  /// the specials. `max_size` counts the specials.
  static Vocab build(std::string_view corpus, TokenizerMode mode, size_t max_size);
  /// `tokens` must start with the five specials in id order.
  static Vocab from_tokens(std::vector<std::string> tokens, TokenizerMode mode);

  size_t size() const noexcept { return tokens_.size(); }
  TokenizerMode mode() const noexcept { return mode_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::string& token(int32_t id) const { return tokens_.at(static_cast<size_t>(id)); }
  int32_t id(std::string_view token) const;
  static bool is_special(int32_t id) noexcept { return id >= 0 && id < static_cast<int32_t>(kNumSpecial); }

  /// Splits text into tokens: UTF-8 code points (char mode, line breaks
  /// dropped) or whitespace-separated words.
  std::vector<std::string> tokenize(std::string_view text) const;
  std::vector<int32_t> encode(std::string_view text) const;

 private:
  TokenizerMode mode_ = TokenizerMode::Char;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int32_t> index_;
};

std::vector<std::string> tokenize(std::string_view text, TokenizerMode mode);

struct TokenBatch {
  size_t batch_size = 0;
  size_t seq_len = 0;
  std::vector<int32_t> input_ids;        // batch_size * seq_len
  std::vector<uint8_t> attention_mask;   // 1 = real token, 0 = padding
};

inline constexpr int32_t kIgnoreLabel = -1;

struct MaskedBatch {
  TokenBatch tokens;
  std::vector<int32_t> labels;  // original id at selected positions, kIgnoreLabel elsewhere
  size_t num_masked() const;
};

struct LabeledBatch {
  TokenBatch tokens;
  std::vector<int32_t> labels;  // one class id per row
};

struct MaskingPolicy {
  double select = 0.15;
  double replace_mask = 0.8;
  double replace_random = 0.1;  // remainder keeps the original token
};

struct MaskedRow {
  std::vector<int32_t> input_ids;
  std::vector<int32_t> labels;
};

/// Selects each non-special position independently with probability
/// `policy.select`; selected positions get their original id as label and
/// are replaced by [MASK], a uniformly drawn different non-special token,
/// or left unchanged. Throws PreconditionError on an empty sequence or one
/// holding only special tokens.
MaskedRow dynamic_mask(std::span<const int32_t> tokens, const Vocab& vocab, SplitMix64& rng,
                       const MaskingPolicy& policy = {});

/// Token stream packed into fixed-length chunks for MLM. Each chunk holds
/// seq_len - 2 tokens so that [CLS] and [SEP] fit around it. The
/// validation chunks are the tail of the stream.
struct MlmCorpus {
  size_t seq_len = 0;
  std::vector<std::vector<int32_t>> train;
  std::vector<std::vector<int32_t>> validation;
};

MlmCorpus build_mlm_corpus(std::string_view text, const Vocab& vocab, size_t seq_len, double validation_fraction);

/// [CLS] chunk [SEP] [PAD]... rows, masked dynamically from `rng`. If no
/// position in the batch was selected the masks are redrawn.
MaskedBatch make_mlm_batch(const std::vector<std::vector<int32_t>>& chunks, std::span<const size_t> indices,
                           size_t seq_len, const Vocab& vocab, SplitMix64& rng, const MaskingPolicy& policy = {});

/// Shuffled chunk order for an epoch; a pure function of (seed, epoch).
std::vector<size_t> epoch_order(size_t n, uint64_t seed, uint64_t epoch);

// ---------------------------------------------------------------------------
// Classification tasks

struct TaskDataset {
  std::vector<std::string> text_a;
  std::vector<std::string> text_b;  // empty unless paired
  std::vector<int32_t> labels;
  std::vector<std::string> label_names;
  bool paired = false;

  size_t size() const noexcept { return labels.size(); }
  size_t num_classes() const noexcept { return label_names.size(); }
};

/// Delimiter-separated text (comma or tab, picked from the header) with
/// header `text[,text2],label`. Fields may be double-quoted. Labels that
/// are all non-negative integers keep their value; otherwise they are
/// numbered in sorted order.
TaskDataset parse_task_data(std::string_view content);
TaskDataset load_task_data(const std::string& path);
std::string format_task_data(const TaskDataset& data);

/// [CLS] a [SEP] (b [SEP]) rows, truncating the longer text first.
LabeledBatch make_classification_batch(const TaskDataset& data, std::span<const size_t> indices, const Vocab& vocab,
                                       size_t seq_len);

struct DataSplit {
  std::vector<size_t> train;
  std::vector<size_t> dev;
  std::vector<size_t> test;
  uint64_t seed = 0;
  std::optional<size_t> size_cap;
};

/// Draws `cap` examples (all when unset) with a seeded permutation, assigns
/// the first train_fraction of the draw to train and the rest to dev; the
/// undrawn examples form the test list. Each list is sorted.
DataSplit subsample(size_t dataset_size, std::optional<size_t> cap, uint64_t seed, double train_fraction = 0.75);

void write_indices(const std::string& path, std::span<const size_t> indices);
std::vector<size_t> read_indices(const std::string& path);

// ---------------------------------------------------------------------------
// Synthetic data

/// English-like text from a small probabilistic grammar, one document per
/// line, at least `target_bytes` long.
std::string synthetic_corpus(uint64_t seed, size_t target_bytes);

/// Two-class task whose classes use disjoint letter sets, so bag-of-chars
/// features separate them linearly.
TaskDataset synthetic_classification(uint64_t seed, size_t n);

}  // namespace raft
