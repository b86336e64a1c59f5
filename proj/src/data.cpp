// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#include "raft/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "raft/errors.hpp"

namespace raft {

namespace {

const std::array<std::string, Vocab::kNumSpecial> kSpecialTokens = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;  // stray continuation byte: keep it as its own token
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string_view to_string(TokenizerMode mode) noexcept { return mode == TokenizerMode::Char ? "char" : "word"; }

TokenizerMode parse_tokenizer_mode(std::string_view name) {
  if (name == "char") return TokenizerMode::Char;
  if (name == "word") return TokenizerMode::Word;
  throw PreconditionError("unknown tokenizer mode '" + std::string(name) + "'");
}

std::vector<std::string> tokenize(std::string_view text, TokenizerMode mode) {
  std::vector<std::string> out;
  if (mode == TokenizerMode::Char) {
    for (size_t i = 0; i < text.size();) {
      const size_t len = std::min(utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
      if (text[i] != '\n' && text[i] != '\r') out.emplace_back(text.substr(i, len));
      i += len;
    }
  } else {
    size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      size_t j = i;
      while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      if (j > i) out.emplace_back(text.substr(i, j - i));
      i = j;
    }
  }
  return out;
}

Vocab Vocab::build(std::string_view corpus, TokenizerMode mode, size_t max_size) {
  if (max_size < kNumSpecial)
    throw PreconditionError("build_vocab: max_size " + std::to_string(max_size) + " is below the " +
                            std::to_string(kNumSpecial) + " special tokens");
  std::map<std::string, size_t> counts;
  for (auto& tok : raft::tokenize(corpus, mode)) ++counts[tok];
  for (const auto& s : kSpecialTokens) counts.erase(s);
  if (counts.empty()) throw PreconditionError("build_vocab: empty corpus");

  std::vector<std::pair<std::string, size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens(kSpecialTokens.begin(), kSpecialTokens.end());
  for (const auto& [tok, count] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(tok);
  }
  return from_tokens(std::move(tokens), mode);
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens, TokenizerMode mode) {
  if (tokens.size() < kNumSpecial || !std::equal(kSpecialTokens.begin(), kSpecialTokens.end(), tokens.begin()))
    throw PreconditionError("vocab: token list must start with the special tokens");
  Vocab v;
  v.mode_ = mode;
  v.tokens_ = std::move(tokens);
  for (size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<int32_t>(i)).second)
      throw PreconditionError("vocab: duplicate token '" + v.tokens_[i] + "'");
  }
  return v;
}

int32_t Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::string> Vocab::tokenize(std::string_view text) const { return raft::tokenize(text, mode_); }

std::vector<int32_t> Vocab::encode(std::string_view text) const {
  std::vector<int32_t> ids;
  for (auto& tok : tokenize(text)) ids.push_back(id(tok));
  return ids;
}

size_t MaskedBatch::num_masked() const {
  return static_cast<size_t>(std::count_if(labels.begin(), labels.end(), [](int32_t l) { return l != kIgnoreLabel; }));
}

MaskedRow dynamic_mask(std::span<const int32_t> tokens, const Vocab& vocab, SplitMix64& rng,
                       const MaskingPolicy& policy) {
  if (tokens.empty()) throw PreconditionError("dynamic_mask: empty sequence");
  if (std::all_of(tokens.begin(), tokens.end(), Vocab::is_special))
    throw PreconditionError("dynamic_mask: sequence has no maskable tokens");

  const uint64_t regular = vocab.size() - Vocab::kNumSpecial;
  MaskedRow row{{tokens.begin(), tokens.end()}, std::vector<int32_t>(tokens.size(), kIgnoreLabel)};
  for (size_t i = 0; i < tokens.size(); ++i) {
    const int32_t original = tokens[i];
    if (Vocab::is_special(original)) continue;
    if (!(rng.uniform() < policy.select)) continue;
    row.labels[i] = original;
    const double outcome = rng.uniform();
    if (outcome < policy.replace_mask) {
      row.input_ids[i] = Vocab::kMask;
    } else if (outcome < policy.replace_mask + policy.replace_random && regular > 1) {
      auto pick = static_cast<int32_t>(Vocab::kNumSpecial + rng.below(regular - 1));
      if (pick >= original) ++pick;
      row.input_ids[i] = pick;
    }
  }
  return row;
}

MlmCorpus build_mlm_corpus(std::string_view text, const Vocab& vocab, size_t seq_len, double validation_fraction) {
  if (seq_len < 3) throw PreconditionError("mlm corpus: seq_len must be at least 3");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw PreconditionError("mlm corpus: validation_fraction must lie in (0, 1)");
  std::vector<int32_t> stream;
  std::string_view rest = text;
  while (!rest.empty()) {
    const size_t eol = rest.find('\n');
    const std::string_view line = rest.substr(0, eol);
    auto ids = vocab.encode(line);
    stream.insert(stream.end(), ids.begin(), ids.end());
    if (eol == std::string_view::npos) break;
    rest.remove_prefix(eol + 1);
  }
  const size_t width = seq_len - 2;
  std::vector<std::vector<int32_t>> chunks;
  for (size_t i = 0; i + width <= stream.size(); i += width) chunks.emplace_back(stream.begin() + i, stream.begin() + i + width);
  if (chunks.size() < 2) throw PreconditionError("mlm corpus: need at least two full chunks of text");

  const size_t n_val = std::clamp<size_t>(static_cast<size_t>(std::llround(validation_fraction * chunks.size())), 1,
                                          chunks.size() - 1);
  MlmCorpus c;
  c.seq_len = seq_len;
  c.train.assign(chunks.begin(), chunks.end() - static_cast<std::ptrdiff_t>(n_val));
  c.validation.assign(chunks.end() - static_cast<std::ptrdiff_t>(n_val), chunks.end());
  return c;
}

MaskedBatch make_mlm_batch(const std::vector<std::vector<int32_t>>& chunks, std::span<const size_t> indices,
                           size_t seq_len, const Vocab& vocab, SplitMix64& rng, const MaskingPolicy& policy) {
  if (indices.empty()) throw PreconditionError("mlm batch: no rows");
  MaskedBatch b;
  b.tokens.batch_size = indices.size();
  b.tokens.seq_len = seq_len;
  b.tokens.input_ids.assign(indices.size() * seq_len, Vocab::kPad);
  b.tokens.attention_mask.assign(indices.size() * seq_len, 0);
  b.labels.assign(indices.size() * seq_len, kIgnoreLabel);

  std::vector<std::vector<int32_t>> rows;
  for (size_t idx : indices) {
    const auto& chunk = chunks.at(idx);
    if (chunk.size() + 2 > seq_len) throw PreconditionError("mlm batch: chunk longer than seq_len - 2");
    std::vector<int32_t> row{Vocab::kCls};
    row.insert(row.end(), chunk.begin(), chunk.end());
    row.push_back(Vocab::kSep);
    rows.push_back(std::move(row));
  }
  for (int attempt = 0; attempt < 1000; ++attempt) {
    size_t selected = 0;
    for (size_t r = 0; r < rows.size(); ++r) {
      const MaskedRow m = dynamic_mask(rows[r], vocab, rng, policy);
      for (size_t i = 0; i < rows[r].size(); ++i) {
        b.tokens.input_ids[r * seq_len + i] = m.input_ids[i];
        b.tokens.attention_mask[r * seq_len + i] = 1;
        b.labels[r * seq_len + i] = m.labels[i];
        selected += m.labels[i] != kIgnoreLabel;
      }
    }
    if (selected > 0) return b;
  }
  throw PreconditionError("mlm batch: masking selected no position in 1000 draws");
}

std::vector<size_t> epoch_order(size_t n, uint64_t seed, uint64_t epoch) {
  SplitMix64 rng(derive_seed(seed, "epoch-" + std::to_string(epoch)));
  return random_permutation(n, rng);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_fields(std::string_view line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw FormatError("task data: unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

std::string quote_field(const std::string& s) {
  if (s.find_first_of(",\"\t") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

bool parse_label_int(const std::string& s, int32_t& value) {
  if (s.empty() || s.size() > 9 || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); }))
    return false;
  value = std::stoi(s);
  return true;
}

}  // namespace

TaskDataset parse_task_data(std::string_view content) {
  std::vector<std::string_view> lines;
  while (!content.empty()) {
    const size_t eol = content.find('\n');
    std::string_view line = content.substr(0, eol);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    if (eol == std::string_view::npos) break;
    content.remove_prefix(eol + 1);
  }
  if (lines.empty()) throw FormatError("task data: missing header");
  const char delim = lines[0].find('\t') != std::string_view::npos ? '\t' : ',';
  const auto header = split_fields(lines[0], delim);
  TaskDataset d;
  if (header == std::vector<std::string>{"text", "label"}) {
    d.paired = false;
  } else if (header == std::vector<std::string>{"text", "text2", "label"}) {
    d.paired = true;
  } else {
    throw FormatError("task data: header must be text,label or text,text2,label");
  }
  std::vector<std::string> raw_labels;
  for (size_t i = 1; i < lines.size(); ++i) {
    auto f = split_fields(lines[i], delim);
    if (f.size() != header.size())
      throw FormatError("task data: line " + std::to_string(i + 1) + " has " + std::to_string(f.size()) + " fields");
    d.text_a.push_back(f[0]);
    if (d.paired) d.text_b.push_back(f[1]);
    raw_labels.push_back(f.back());
  }
  if (raw_labels.empty()) throw FormatError("task data: no examples");

  std::vector<int32_t> numeric(raw_labels.size());
  bool all_int = true;
  for (size_t i = 0; i < raw_labels.size() && all_int; ++i) all_int = parse_label_int(raw_labels[i], numeric[i]);
  if (all_int) {
    const int32_t max_label = *std::max_element(numeric.begin(), numeric.end());
    for (int32_t c = 0; c <= max_label; ++c) d.label_names.push_back(std::to_string(c));
    d.labels = numeric;
  } else {
    const std::set<std::string> names(raw_labels.begin(), raw_labels.end());
    d.label_names.assign(names.begin(), names.end());
    for (const auto& l : raw_labels)
      d.labels.push_back(static_cast<int32_t>(std::lower_bound(d.label_names.begin(), d.label_names.end(), l) -
                                              d.label_names.begin()));
  }
  return d;
}

TaskDataset load_task_data(const std::string& path) { return parse_task_data(read_file(path)); }

std::string format_task_data(const TaskDataset& data) {
  std::ostringstream out;
  out << (data.paired ? "text,text2,label\n" : "text,label\n");
  for (size_t i = 0; i < data.size(); ++i) {
    out << quote_field(data.text_a[i]) << ',';
    if (data.paired) out << quote_field(data.text_b[i]) << ',';
    out << quote_field(data.label_names.at(static_cast<size_t>(data.labels[i]))) << '\n';
  }
  return out.str();
}

LabeledBatch make_classification_batch(const TaskDataset& data, std::span<const size_t> indices, const Vocab& vocab,
                                       size_t seq_len) {
  const size_t specials = data.paired ? 3 : 2;
  if (seq_len <= specials) throw PreconditionError("classification batch: seq_len too short");
  LabeledBatch b;
  b.tokens.batch_size = indices.size();
  b.tokens.seq_len = seq_len;
  b.tokens.input_ids.assign(indices.size() * seq_len, Vocab::kPad);
  b.tokens.attention_mask.assign(indices.size() * seq_len, 0);
  for (size_t r = 0; r < indices.size(); ++r) {
    const size_t idx = indices[r];
    if (idx >= data.size()) throw PreconditionError("classification batch: index out of range");
    auto a = vocab.encode(data.text_a[idx]);
    std::vector<int32_t> bb = data.paired ? vocab.encode(data.text_b[idx]) : std::vector<int32_t>{};
    while (a.size() + bb.size() + specials > seq_len) (a.size() >= bb.size() ? a : bb).pop_back();
    std::vector<int32_t> row{Vocab::kCls};
    row.insert(row.end(), a.begin(), a.end());
    row.push_back(Vocab::kSep);
    if (data.paired) {
      row.insert(row.end(), bb.begin(), bb.end());
      row.push_back(Vocab::kSep);
    }
    for (size_t i = 0; i < row.size(); ++i) {
      b.tokens.input_ids[r * seq_len + i] = row[i];
      b.tokens.attention_mask[r * seq_len + i] = 1;
    }
    b.labels.push_back(data.labels[idx]);
  }
  return b;
}

DataSplit subsample(size_t dataset_size, std::optional<size_t> cap, uint64_t seed, double train_fraction) {
  const size_t take = cap.value_or(dataset_size);
  if (take > dataset_size)
    throw PreconditionError("subsample: cap " + std::to_string(take) + " exceeds dataset size " +
                            std::to_string(dataset_size));
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw PreconditionError("subsample: bad train fraction");
  SplitMix64 rng(seed);
  const auto perm = random_permutation(dataset_size, rng);
  const size_t n_train = static_cast<size_t>(std::llround(train_fraction * static_cast<double>(take)));
  DataSplit s;
  s.seed = seed;
  s.size_cap = cap;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.dev.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.begin() + static_cast<std::ptrdiff_t>(take));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(take), perm.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.dev.begin(), s.dev.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

void write_indices(const std::string& path, std::span<const size_t> indices) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (size_t i : indices) out << i << '\n';
}

std::vector<size_t> read_indices(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<size_t> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isdigit(c); }))
      throw FormatError("split file: bad index '" + line + "'");
    out.push_back(static_cast<size_t>(std::stoull(line)));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

template <size_t N>
const std::string& pick(const std::array<std::string, N>& words, SplitMix64& rng) {
  return words[rng.below(N)];
}

const std::array<std::string, 24> kNouns = {
    "cat",    "dog",    "river",  "teacher", "garden", "city",    "window", "letter",
    "farmer", "bridge", "forest", "child",   "doctor", "market",  "song",   "engine",
    "island", "king",   "storm",  "painter", "road",   "library", "mountain", "ship"};
const std::array<std::string, 16> kAdjectives = {"old",   "quiet", "bright", "small", "heavy", "green",
                                                  "cold",  "happy", "strange", "tall", "broken", "gentle",
                                                  "early", "dark",  "golden", "busy"};
const std::array<std::string, 16> kVerbs = {"sees",    "finds",  "carries", "follows", "builds", "paints",
                                             "watches", "opens",  "reaches", "crosses", "helps",  "leaves",
                                             "visits",  "hears",  "keeps",   "remembers"};
const std::array<std::string, 8> kPreps = {"near", "under", "behind", "beside", "across", "inside", "above", "past"};
const std::array<std::string, 6> kDets = {"the", "the", "a", "every", "this", "that"};
const std::array<std::string, 6> kAdverbs = {"slowly", "often", "never", "quickly", "always", "again"};

std::string noun_phrase(SplitMix64& rng) {
  std::string s = pick(kDets, rng);
  if (s == "a" || rng.uniform() < 0.5) s += " " + pick(kAdjectives, rng);
  if (s.starts_with("a ") && std::string("aeiou").find(s[2]) != std::string::npos) s.insert(1, "n");
  return s + " " + pick(kNouns, rng);
}

std::string sentence(SplitMix64& rng) {
  std::string s = noun_phrase(rng);
  if (rng.uniform() < 0.3) s += " " + pick(kAdverbs, rng);
  s += " " + pick(kVerbs, rng) + " " + noun_phrase(rng);
  if (rng.uniform() < 0.5) s += " " + pick(kPreps, rng) + " " + noun_phrase(rng);
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s + ".";
}

// Letters a-m only vs letters n-z only.
const std::array<std::string, 20> kClassA = {"bad",  "cake", "dice", "flame", "glad", "hike", "jam",
                                              "lime", "mild", "bike", "game",  "idea", "face", "calm",
                                              "deal", "fig",  "hide", "label", "made", "blade"};
const std::array<std::string, 20> kClassB = {"run",   "stop", "toy",   "worry", "sunny", "puppy", "zoo",
                                              "story", "trust", "you",  "sort",  "row",   "snow",  "turn",
                                              "worst", "sorry", "pony", "rust",  "noon",  "spot"};

}  // namespace

std::string synthetic_corpus(uint64_t seed, size_t target_bytes) {
  SplitMix64 rng(seed);
  std::string out;
  out.reserve(target_bytes + 512);
  while (out.size() < target_bytes) {
    const size_t sentences = 2 + rng.below(4);
    for (size_t i = 0; i < sentences; ++i) {
      if (i) out += ' ';
      out += sentence(rng);
    }
    out += '\n';
  }
  return out;
}

TaskDataset synthetic_classification(uint64_t seed, size_t n) {
  SplitMix64 rng(seed);
  TaskDataset d;
  d.label_names = {"0", "1"};
  for (size_t i = 0; i < n; ++i) {
    const int32_t label = static_cast<int32_t>(rng.below(2));
    const size_t words = 3 + rng.below(4);
    std::string text;
    for (size_t w = 0; w < words; ++w) {
      if (w) text += ' ';
      text += label == 0 ? pick(kClassA, rng) : pick(kClassB, rng);
    }
    d.text_a.push_back(std::move(text));
    d.labels.push_back(label);
  }
  return d;
}

}  // namespace raft
