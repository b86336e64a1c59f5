// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "raft/data.hpp"
#include "raft/errors.hpp"

namespace raft {
namespace {

Vocab char_vocab(std::string_view text = "abcdefghij") { return Vocab::build(text, TokenizerMode::Char, 100); }

TEST(Tokenize, CharAndWordModes) {
  EXPECT_EQ(tokenize("ab\ncé", TokenizerMode::Char), (std::vector<std::string>{"a", "b", "c", "é"}));
  EXPECT_EQ(tokenize("  the cat\tsat\n", TokenizerMode::Word), (std::vector<std::string>{"the", "cat", "sat"}));
  EXPECT_EQ(parse_tokenizer_mode(to_string(TokenizerMode::Word)), TokenizerMode::Word);
  EXPECT_THROW(parse_tokenizer_mode("bpe"), PreconditionError);
}

TEST(VocabTest, SpecialsFirstThenFrequencyThenBytes) {
  const auto v = Vocab::build("bbbaac", TokenizerMode::Char, 100);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "b", "a", "c"}));
  EXPECT_EQ(v.id("z"), Vocab::kUnk);
  EXPECT_EQ(v.encode("cab"), (std::vector<int32_t>{7, 6, 5}));
  const auto capped = Vocab::build("bbbaac", TokenizerMode::Char, 6);
  EXPECT_EQ(capped.size(), 6u);
  EXPECT_EQ(capped.id("a"), Vocab::kUnk);
  const auto tie = Vocab::build("ba", TokenizerMode::Char, 100);
  EXPECT_EQ(tie.token(5), "a");
  EXPECT_THROW(Vocab::build("abc", TokenizerMode::Char, 4), PreconditionError);
  EXPECT_THROW(Vocab::build("", TokenizerMode::Char, 10), PreconditionError);
}

TEST(VocabTest, FromTokensValidates) {
  const auto v = char_vocab();
  const auto back = Vocab::from_tokens(v.tokens(), TokenizerMode::Char);
  EXPECT_EQ(back.encode("jab"), v.encode("jab"));
  EXPECT_THROW(Vocab::from_tokens({"a", "b"}, TokenizerMode::Char), PreconditionError);
  auto dup = v.tokens();
  dup.push_back("a");
  EXPECT_THROW(Vocab::from_tokens(dup, TokenizerMode::Char), PreconditionError);
}

TEST(DynamicMask, SelectionAndReplacementRates) {
  const auto v = char_vocab();
  SplitMix64 rng(42);
  std::vector<int32_t> tokens(1000);
  for (size_t i = 0; i < tokens.size(); ++i) tokens[i] = static_cast<int32_t>(5 + i % 10);
  size_t selected = 0, masked = 0, random = 0, kept = 0, total = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto row = dynamic_mask(tokens, v, rng);
    for (size_t i = 0; i < tokens.size(); ++i) {
      ++total;
      if (row.labels[i] == kIgnoreLabel) {
        EXPECT_EQ(row.input_ids[i], tokens[i]);
        continue;
      }
      ++selected;
      EXPECT_EQ(row.labels[i], tokens[i]);
      if (row.input_ids[i] == Vocab::kMask) {
        ++masked;
      } else if (row.input_ids[i] != tokens[i]) {
        ++random;
        EXPECT_FALSE(Vocab::is_special(row.input_ids[i]));
      } else {
        ++kept;
      }
    }
  }
  // Binomial standard errors at n = 1e5 are ~0.0011 for selection.
  EXPECT_NEAR(static_cast<double>(selected) / total, 0.15, 0.005);
  EXPECT_NEAR(static_cast<double>(masked) / selected, 0.8, 0.01);
  EXPECT_NEAR(static_cast<double>(random) / selected, 0.1, 0.01);
  EXPECT_NEAR(static_cast<double>(kept) / selected, 0.1, 0.01);
}

TEST(DynamicMask, SpecialsNeverSelectedAndErrors) {
  const auto v = char_vocab();
  SplitMix64 rng(1);
  const std::vector<int32_t> tokens{Vocab::kCls, 5, 6, Vocab::kSep, Vocab::kPad};
  for (int rep = 0; rep < 2000; ++rep) {
    const auto row = dynamic_mask(tokens, v, rng, {1.0, 0.8, 0.1});
    EXPECT_EQ(row.labels[0], kIgnoreLabel);
    EXPECT_EQ(row.labels[3], kIgnoreLabel);
    EXPECT_EQ(row.labels[4], kIgnoreLabel);
    EXPECT_NE(row.labels[1], kIgnoreLabel);
  }
  EXPECT_THROW(dynamic_mask(std::vector<int32_t>{}, v, rng), PreconditionError);
  EXPECT_THROW(dynamic_mask(std::vector<int32_t>{0, 2, 3}, v, rng), PreconditionError);
}

TEST(DynamicMask, DeterministicForSeed) {
  const auto v = char_vocab();
  std::vector<int32_t> tokens(64, 7);
  SplitMix64 a(9), b(9);
  EXPECT_EQ(dynamic_mask(tokens, v, a).input_ids, dynamic_mask(tokens, v, b).input_ids);
}

TEST(DynamicMask, RedrawsDifferEachStep) {
  const auto v = char_vocab();
  SplitMix64 rng(12);
  std::vector<int32_t> tokens(32, 8);
  int identical = 0;
  for (int rep = 0; rep < 1000; ++rep)
    identical += dynamic_mask(tokens, v, rng).labels == dynamic_mask(tokens, v, rng).labels ? 1 : 0;
  EXPECT_LE(identical, 10);
}

TEST(MlmCorpusTest, ChunksAndBatches) {
  const std::string text = synthetic_corpus(3, 20000);
  const auto v = Vocab::build(text, TokenizerMode::Char, 256);
  const auto c = build_mlm_corpus(text, v, 32, 0.1);
  ASSERT_FALSE(c.train.empty());
  ASSERT_FALSE(c.validation.empty());
  for (const auto& ch : c.train) EXPECT_EQ(ch.size(), 30u);
  EXPECT_NEAR(static_cast<double>(c.validation.size()) / (c.train.size() + c.validation.size()), 0.1, 0.02);

  SplitMix64 rng(5);
  const std::vector<size_t> idx{0, 2, 4};
  const auto b = make_mlm_batch(c.train, idx, 32, v, rng);
  EXPECT_EQ(b.tokens.batch_size, 3u);
  EXPECT_EQ(b.tokens.input_ids.size(), 96u);
  EXPECT_GT(b.num_masked(), 0u);
  for (size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(b.tokens.input_ids[r * 32], Vocab::kCls);
    EXPECT_EQ(b.tokens.input_ids[r * 32 + 31], Vocab::kSep);
  }
  EXPECT_THROW(build_mlm_corpus("ab", v, 32, 0.1), PreconditionError);
  EXPECT_THROW(build_mlm_corpus(text, v, 32, 0.0), PreconditionError);
  EXPECT_THROW(make_mlm_batch(c.train, std::vector<size_t>{}, 32, v, rng), PreconditionError);
}

TEST(MlmCorpusTest, EpochOrderIsSeededPermutation) {
  const auto a = epoch_order(50, 7, 0);
  EXPECT_EQ(a, epoch_order(50, 7, 0));
  EXPECT_NE(a, epoch_order(50, 7, 1));
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (size_t i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(TaskData, ParseFormatRoundTrip) {
  const auto d = parse_task_data("text,text2,label\n\"a, b\",c,pos\nd,\"e \"\"q\"\"\",neg\n");
  ASSERT_EQ(d.size(), 2u);
  EXPECT_TRUE(d.paired);
  EXPECT_EQ(d.text_a[0], "a, b");
  EXPECT_EQ(d.text_b[1], "e \"q\"");
  EXPECT_EQ(d.label_names, (std::vector<std::string>{"neg", "pos"}));
  EXPECT_EQ(d.labels, (std::vector<int32_t>{1, 0}));
  const auto back = parse_task_data(format_task_data(d));
  EXPECT_EQ(back.text_a, d.text_a);
  EXPECT_EQ(back.text_b, d.text_b);
  EXPECT_EQ(back.labels, d.labels);
}

TEST(TaskData, TabsAndNumericLabels) {
  const auto d = parse_task_data("text\tlabel\nx y\t2\nz\t0\n");
  EXPECT_FALSE(d.paired);
  EXPECT_EQ(d.labels, (std::vector<int32_t>{2, 0}));
  EXPECT_EQ(d.num_classes(), 3u);
}

TEST(TaskData, Malformed) {
  EXPECT_THROW(parse_task_data(""), FormatError);
  EXPECT_THROW(parse_task_data("foo,bar,baz,qux\n"), FormatError);
  EXPECT_THROW(parse_task_data("text,label\n"), FormatError);
  EXPECT_THROW(parse_task_data("text,label\na,b,c\n"), FormatError);
  EXPECT_THROW(parse_task_data("text,label\n\"abc,1\n"), FormatError);
}

TEST(ClassificationBatch, LayoutAndTruncation) {
  const auto v = char_vocab();
  TaskDataset d;
  d.paired = true;
  d.text_a = {"abcdef"};
  d.text_b = {"gh"};
  d.labels = {1};
  d.label_names = {"0", "1"};
  const std::vector<size_t> idx{0};
  const auto b = make_classification_batch(d, idx, v, 8);
  // 3 specials leave 5 slots: a is truncated to 3, b keeps 2.
  const std::vector<int32_t> want{Vocab::kCls, v.id("a"), v.id("b"), v.id("c"), Vocab::kSep,
                                  v.id("g"),   v.id("h"), Vocab::kSep};
  EXPECT_EQ(b.tokens.input_ids, want);
  EXPECT_EQ(b.labels, (std::vector<int32_t>{1}));
  const auto padded = make_classification_batch(d, idx, v, 16);
  // [CLS] abcdef [SEP] gh [SEP] fills positions 0..10.
  EXPECT_EQ(padded.tokens.attention_mask[10], 1);
  EXPECT_EQ(padded.tokens.attention_mask[11], 0);
  EXPECT_EQ(padded.tokens.input_ids[11], Vocab::kPad);
  EXPECT_THROW(make_classification_batch(d, idx, v, 3), PreconditionError);
  EXPECT_THROW(make_classification_batch(d, std::vector<size_t>{1}, v, 8), PreconditionError);
}

TEST(Subsample, DisjointSortedAndSeeded) {
  const auto s = subsample(100, 40, 11);
  EXPECT_EQ(s.train.size(), 30u);
  EXPECT_EQ(s.dev.size(), 10u);
  EXPECT_EQ(s.test.size(), 60u);
  std::set<size_t> all;
  for (const auto* list : {&s.train, &s.dev, &s.test}) {
    EXPECT_TRUE(std::is_sorted(list->begin(), list->end()));
    all.insert(list->begin(), list->end());
  }
  EXPECT_EQ(all.size(), 100u);
  EXPECT_EQ(subsample(100, 40, 11).train, s.train);
  EXPECT_NE(subsample(100, 40, 12).train, s.train);
  EXPECT_THROW(subsample(10, 11, 1), PreconditionError);
  EXPECT_THROW(subsample(10, 5, 1, 0.0), PreconditionError);
}

TEST(Subsample, IndexFilesRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "raft_idx_test.txt").string();
  const std::vector<size_t> idx{3, 1, 4, 15};
  write_indices(path, idx);
  EXPECT_EQ(read_indices(path), idx);
  std::filesystem::remove(path);
}

TEST(Synthetic, CorpusAndTask) {
  const auto text = synthetic_corpus(1, 5000);
  EXPECT_GE(text.size(), 5000u);
  EXPECT_EQ(text, synthetic_corpus(1, 5000));
  EXPECT_NE(text, synthetic_corpus(2, 5000));
  const auto task = synthetic_classification(4, 200);
  EXPECT_EQ(task.size(), 200u);
  EXPECT_EQ(task.num_classes(), 2u);
  // The two classes draw from disjoint character sets.
  std::set<char> c0, c1;
  for (size_t i = 0; i < task.size(); ++i)
    for (char ch : task.text_a[i])
      if (ch != ' ') (task.labels[i] == 0 ? c0 : c1).insert(ch);
  for (char ch : c0) EXPECT_EQ(c1.count(ch), 0u) << ch;
}

}  // namespace
}  // namespace raft
