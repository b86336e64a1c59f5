// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#include "raft/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <sstream>

#include "raft/errors.hpp"
#include "raft/random.hpp"

namespace raft {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'R', 'A', 'F', 'T', 'C', 'K', 'P', 'T'};
constexpr uint8_t kF32 = 0;
constexpr uint8_t kF64 = 1;

class Writer {
 public:
  template <typename U>
  void put(U v) {
    static_assert(std::is_trivially_copyable_v<U>);
    bytes_.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void raw(const void* p, size_t n) { bytes_.append(static_cast<const char*>(p), n); }
  void str(std::string_view s) {
    put(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  template <typename U>
  void tensor(std::string_view name, const Shape& shape, std::span<const U> data) {
    str(name);
    put(std::is_same_v<U, float> ? kF32 : kF64);
    put(static_cast<uint32_t>(shape.size()));
    for (size_t d : shape) put(static_cast<uint64_t>(d));
    put(static_cast<uint64_t>(data.size_bytes()));
    raw(data.data(), data.size_bytes());
  }
  std::string& bytes() { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  template <typename U>
  U get() {
    U v;
    std::memcpy(&v, take(sizeof v), sizeof v);
    return v;
  }
  const char* take(size_t n) {
    if (n > bytes_.size() - pos_) throw FormatError("checkpoint truncated");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string str() {
    const auto n = get<uint32_t>();
    return std::string(take(n), n);
  }
  struct RawTensor {
    std::string name;
    uint8_t dtype;
    Shape shape;
    const char* data;
    size_t nbytes;
  };
  RawTensor tensor() {
    RawTensor t;
    t.name = str();
    t.dtype = get<uint8_t>();
    if (t.dtype != kF32 && t.dtype != kF64) throw FormatError("checkpoint: unknown dtype for " + t.name);
    const auto rank = get<uint32_t>();
    if (rank > 8) throw FormatError("checkpoint: implausible rank for " + t.name);
    for (uint32_t i = 0; i < rank; ++i) t.shape.push_back(static_cast<size_t>(get<uint64_t>()));
    t.nbytes = static_cast<size_t>(get<uint64_t>());
    const size_t elem = t.dtype == kF32 ? sizeof(float) : sizeof(double);
    if (t.nbytes != shape_numel(t.shape) * elem) throw FormatError("checkpoint: size mismatch for " + t.name);
    t.data = take(t.nbytes);
    return t;
  }
  size_t pos() const { return pos_; }

 private:
  std::string_view bytes_;
  size_t pos_ = 0;
};

std::vector<double> as_doubles(const Reader::RawTensor& t) {
  if (t.dtype != kF64) throw FormatError("checkpoint: optimizer moments must be f64");
  std::vector<double> v(t.nbytes / sizeof(double));
  std::memcpy(v.data(), t.data, t.nbytes);
  return v;
}

}  // namespace

std::string serialize_checkpoint(const Model& model, const Vocab& vocab, uint64_t rng_state, const AdamW* optimizer) {
  nlohmann::json meta;
  meta["config"] = nlohmann::json::parse(to_json(model.config()));
  meta["vocab"] = {{"mode", std::string(to_string(vocab.mode()))}, {"tokens", vocab.tokens()}};
  const std::string meta_text = meta.dump();

  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.put(kCheckpointVersion);
  w.put(static_cast<uint64_t>(meta_text.size()));
  w.raw(meta_text.data(), meta_text.size());
  w.put(rng_state);
  const auto& params = model.parameters();  // std::map: sorted by name
  w.put(static_cast<uint64_t>(params.size()));
  for (const auto& [name, t] : params) w.tensor<float>(name, t.shape(), t.data());
  w.put(static_cast<uint8_t>(optimizer != nullptr));
  if (optimizer != nullptr) {
    w.put(static_cast<int64_t>(optimizer->steps_taken()));
    w.put(static_cast<uint64_t>(optimizer->moments().size()));
    for (const auto& [name, mom] : optimizer->moments()) {
      w.str(name);
      w.tensor<double>("m", {mom.m.size()}, mom.m);
      w.tensor<double>("v", {mom.v.size()}, mom.v);
    }
  }
  w.put(fnv1a64(w.bytes()));
  return std::move(w.bytes());
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic + sizeof(uint32_t) + sizeof(uint64_t))
    throw FormatError("checkpoint truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw FormatError("not a checkpoint (bad magic)");
  Reader r(bytes);
  r.take(sizeof kMagic);
  const auto version = r.get<uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const uint64_t stored_sum = [&] {
    uint64_t v;
    std::memcpy(&v, bytes.data() + bytes.size() - sizeof v, sizeof v);
    return v;
  }();
  if (fnv1a64(bytes.substr(0, bytes.size() - sizeof(uint64_t))) != stored_sum)
    throw FormatError("checkpoint checksum mismatch (corrupt or truncated)");

  const auto meta_len = r.get<uint64_t>();
  const std::string_view meta_text(r.take(static_cast<size_t>(meta_len)), static_cast<size_t>(meta_len));
  TransformerConfig config;
  Vocab vocab;
  try {
    const auto meta = nlohmann::json::parse(meta_text);
    config = transformer_config_from_json(meta.at("config").dump());
    vocab = Vocab::from_tokens(meta.at("vocab").at("tokens").get<std::vector<std::string>>(),
                               parse_tokenizer_mode(meta.at("vocab").at("mode").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  } catch (const PreconditionError& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  const auto rng_state = r.get<uint64_t>();

  Model model(config, 0);
  const auto count = r.get<uint64_t>();
  if (count != model.parameters().size()) throw FormatError("checkpoint: parameter count does not match its config");
  for (uint64_t i = 0; i < count; ++i) {
    const auto raw = r.tensor();
    if (raw.dtype != kF32) throw FormatError("checkpoint: parameters must be f32");
    if (model.parameters().count(raw.name) == 0) throw FormatError("checkpoint: unexpected tensor " + raw.name);
    Tensor<float> dst = model.parameter(raw.name);
    if (dst.shape() != raw.shape) throw FormatError("checkpoint: shape mismatch for " + raw.name);
    std::memcpy(dst.data().data(), raw.data, raw.nbytes);
  }

  std::optional<OptimizerState> optimizer;
  if (r.get<uint8_t>() != 0) {
    OptimizerState st;
    st.steps_taken = r.get<int64_t>();
    const auto n = r.get<uint64_t>();
    for (uint64_t i = 0; i < n; ++i) {
      const std::string name = r.str();
      AdamW::Moments mom;
      mom.m = as_doubles(r.tensor());
      mom.v = as_doubles(r.tensor());
      st.moments.emplace(name, std::move(mom));
    }
    optimizer = std::move(st);
  }
  if (r.pos() + sizeof(uint64_t) != bytes.size()) throw FormatError("checkpoint: trailing bytes");
  return Checkpoint{std::move(model), std::move(vocab), rng_state, std::move(optimizer)};
}

void save_checkpoint(const std::string& path, const Model& model, const Vocab& vocab, uint64_t rng_state,
                     const AdamW* optimizer) {
  const std::string bytes = serialize_checkpoint(model, vocab, rng_state, optimizer);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

Checkpoint load_checkpoint(const std::string& path, const TransformerConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (!ck.model.config().same_architecture(expected))
    throw ConfigMismatchError("checkpoint " + path + " has a different architecture");
  return ck;
}

}  // namespace raft
