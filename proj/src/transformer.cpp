// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#include "raft/transformer.hpp"

#include <cmath>
#include <json.hpp>

#include "raft/errors.hpp"
#include "raft/random.hpp"

namespace raft {

bool ActivationKind::same_kind(const ActivationKind& other) const noexcept {
  if (type != other.type) return false;
  if (!is_rational()) return true;
  return coeffs.m() == other.coeffs.m() && coeffs.n() == other.coeffs.n() && trainable == other.trainable;
}

TransformerConfig TransformerConfig::uniform(int layers, int hidden, int heads, int vocab, int max_seq_len,
                                             const ActivationKind& act) {
  TransformerConfig c;
  c.num_layers = layers;
  c.hidden_size = hidden;
  c.num_heads = heads;
  c.ffn_size = 4 * hidden;
  c.vocab_size = vocab;
  c.max_seq_len = max_seq_len;
  c.activation.assign(static_cast<size_t>(std::max(layers, 0)), act);
  c.pooler_activation = act;
  return c;
}

void TransformerConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v <= 0) throw PreconditionError(std::string("transformer config: ") + what + " must be positive");
  };
  positive(num_layers, "num_layers");
  positive(hidden_size, "hidden_size");
  positive(num_heads, "num_heads");
  positive(ffn_size, "ffn_size");
  positive(vocab_size, "vocab_size");
  positive(max_seq_len, "max_seq_len");
  if (num_classes < 0) throw PreconditionError("transformer config: num_classes must be non-negative");
  if (hidden_size % num_heads != 0)
    throw PreconditionError("transformer config: hidden_size must be divisible by num_heads");
  if (activation.size() != static_cast<size_t>(num_layers))
    throw PreconditionError("transformer config: need one activation per layer");
  for (const auto& a : activation)
    if (a.is_rational()) a.coeffs.validate();
  if (pooler_activation.is_rational()) pooler_activation.coeffs.validate();
  if (!(init_std > 0.0) || !(layer_norm_eps > 0.0))
    throw PreconditionError("transformer config: init_std and layer_norm_eps must be positive");
}

bool TransformerConfig::same_architecture(const TransformerConfig& o) const {
  if (num_layers != o.num_layers || hidden_size != o.hidden_size || num_heads != o.num_heads ||
      ffn_size != o.ffn_size || vocab_size != o.vocab_size || max_seq_len != o.max_seq_len ||
      num_classes != o.num_classes || init_scheme != o.init_scheme || tie_embeddings != o.tie_embeddings ||
      activation.size() != o.activation.size() || !pooler_activation.same_kind(o.pooler_activation))
    return false;
  for (size_t i = 0; i < activation.size(); ++i)
    if (!activation[i].same_kind(o.activation[i])) return false;
  return true;
}

size_t TransformerConfig::num_rafs() const {
  size_t n = 0;
  for (const auto& a : activation) n += a.is_rational();
  return n + (pooler_activation.is_rational() ? 1 : 0);
}

// ---------------------------------------------------------------------------
// JSON

namespace {

using nlohmann::json;

std::string activation_type_name(ActivationType t) {
  switch (t) {
    case ActivationType::FixedGELU: return "gelu";
    case ActivationType::FixedReLU: return "relu";
    case ActivationType::Rational: return "rational";
  }
  return "?";
}

json activation_json(const ActivationKind& a) {
  json j{{"type", activation_type_name(a.type)}};
  if (a.is_rational()) {
    j["m"] = a.coeffs.m();
    j["n"] = a.coeffs.n();
    j["coefficients"] = a.coeffs.flat();
    j["trainable"] = a.trainable;
  }
  return j;
}

ActivationKind activation_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "gelu") return ActivationKind::fixed_gelu();
  if (type == "relu") return ActivationKind::fixed_relu();
  if (type == "rational") {
    const auto flat = j.at("coefficients").get<std::vector<double>>();
    return ActivationKind::rational(RationalCoefficients::from_flat(j.at("m").get<int>(), j.at("n").get<int>(), flat),
                                    j.value("trainable", true));
  }
  throw FormatError("unknown activation type '" + type + "'");
}

}  // namespace

std::string to_json(const TransformerConfig& c) {
  json j;
  j["num_layers"] = c.num_layers;
  j["hidden_size"] = c.hidden_size;
  j["num_heads"] = c.num_heads;
  j["ffn_size"] = c.ffn_size;
  j["vocab_size"] = c.vocab_size;
  j["max_seq_len"] = c.max_seq_len;
  j["num_classes"] = c.num_classes;
  j["init_scheme"] = c.init_scheme == InitScheme::Standard ? "standard" : "residual_scaled";
  j["tie_embeddings"] = c.tie_embeddings;
  j["init_std"] = c.init_std;
  j["layer_norm_eps"] = c.layer_norm_eps;
  j["activation"] = json::array();
  for (const auto& a : c.activation) j["activation"].push_back(activation_json(a));
  j["pooler_activation"] = activation_json(c.pooler_activation);
  return j.dump();
}

TransformerConfig transformer_config_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    TransformerConfig c;
    c.num_layers = j.at("num_layers").get<int>();
    c.hidden_size = j.at("hidden_size").get<int>();
    c.num_heads = j.at("num_heads").get<int>();
    c.ffn_size = j.at("ffn_size").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.num_classes = j.value("num_classes", 0);
    const std::string scheme = j.value("init_scheme", std::string("standard"));
    if (scheme != "standard" && scheme != "residual_scaled") throw FormatError("unknown init_scheme " + scheme);
    c.init_scheme = scheme == "standard" ? InitScheme::Standard : InitScheme::ResidualScaled;
    c.tie_embeddings = j.value("tie_embeddings", true);
    c.init_std = j.value("init_std", 0.02);
    c.layer_norm_eps = j.value("layer_norm_eps", 1e-12);
    c.activation.clear();
    for (const auto& a : j.at("activation")) c.activation.push_back(activation_from_json(a));
    c.pooler_activation = activation_from_json(j.at("pooler_activation"));
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("transformer config: ") + e.what());
  } catch (const PreconditionError& e) {
    throw FormatError(e.what());
  } catch (const DomainError& e) {
    throw FormatError(e.what());
  }
}

// ---------------------------------------------------------------------------
// Model

template <typename T>
TransformerModel<T>::TransformerModel(TransformerConfig config, uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const auto H = static_cast<size_t>(config_.hidden_size);
  const auto F = static_cast<size_t>(config_.ffn_size);
  const auto V = static_cast<size_t>(config_.vocab_size);
  const double sd = config_.init_std;
  const double residual_sd =
      config_.init_scheme == InitScheme::ResidualScaled ? sd / std::sqrt(2.0 * config_.num_layers) : sd;

  add_param("embeddings.word", {V, H}, seed, sd);
  add_param("embeddings.position", {static_cast<size_t>(config_.max_seq_len), H}, seed, sd);
  add_const_param("embeddings.ln.weight", {H}, T(1));
  add_const_param("embeddings.ln.bias", {H}, T(0));
  for (int i = 0; i < config_.num_layers; ++i) {
    const std::string p = "layer." + std::to_string(i) + ".";
    for (const char* proj : {"query", "key", "value"}) {
      add_param(p + "attn." + proj + ".weight", {H, H}, seed, sd);
      add_const_param(p + "attn." + proj + ".bias", {H}, T(0));
    }
    add_param(p + "attn.output.weight", {H, H}, seed, residual_sd);
    add_const_param(p + "attn.output.bias", {H}, T(0));
    add_const_param(p + "attn.ln.weight", {H}, T(1));
    add_const_param(p + "attn.ln.bias", {H}, T(0));
    add_param(p + "ffn.w1.weight", {H, F}, seed, sd);
    add_const_param(p + "ffn.w1.bias", {F}, T(0));
    add_param(p + "ffn.w2.weight", {F, H}, seed, residual_sd);
    add_const_param(p + "ffn.w2.bias", {H}, T(0));
    add_const_param(p + "ffn.ln.weight", {H}, T(1));
    add_const_param(p + "ffn.ln.bias", {H}, T(0));
    const auto& act = config_.activation[static_cast<size_t>(i)];
    if (act.is_rational()) {
      const auto flat = act.coeffs.flat();
      params_[p + "ffn.raf"] = Tensor<T>::from({flat.size()}, std::vector<T>(flat.begin(), flat.end()), act.trainable);
    }
  }
  add_const_param("mlm.bias", {V}, T(0));
  if (!config_.tie_embeddings) add_param("mlm.decoder.weight", {V, H}, seed, sd);
  add_param("pooler.weight", {H, H}, seed, sd);
  add_const_param("pooler.bias", {H}, T(0));
  if (config_.pooler_activation.is_rational()) {
    const auto flat = config_.pooler_activation.coeffs.flat();
    params_["pooler.raf"] =
        Tensor<T>::from({flat.size()}, std::vector<T>(flat.begin(), flat.end()), config_.pooler_activation.trainable);
  }
  if (config_.num_classes > 0) {
    const int classes = config_.num_classes;
    config_.num_classes = 0;
    attach_classifier(classes, seed);
  }
  bind_layers();
}

template <typename T>
Tensor<T> TransformerModel<T>::add_param(const std::string& name, Shape shape, uint64_t seed, double stddev,
                                         bool requires_grad) {
  SplitMix64 rng(derive_seed(seed, name));
  std::vector<T> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<T>(rng.normal(0.0, stddev));
  auto t = Tensor<T>::from(std::move(shape), std::move(values), requires_grad);
  params_[name] = t;
  return t;
}

template <typename T>
Tensor<T> TransformerModel<T>::add_const_param(const std::string& name, Shape shape, T value) {
  auto t = Tensor<T>::full(std::move(shape), value, true);
  params_[name] = t;
  return t;
}

template <typename T>
void TransformerModel<T>::attach_classifier(int num_classes, uint64_t seed) {
  if (num_classes < 1) throw PreconditionError("attach_classifier: need at least one class");
  const auto H = static_cast<size_t>(config_.hidden_size);
  add_param("classifier.weight", {H, static_cast<size_t>(num_classes)}, seed, config_.init_std);
  add_const_param("classifier.bias", {static_cast<size_t>(num_classes)}, T(0));
  config_.num_classes = num_classes;
}

template <typename T>
void TransformerModel<T>::bind_layers() {
  layers_.clear();
  for (int i = 0; i < config_.num_layers; ++i) {
    const std::string p = "layer." + std::to_string(i) + ".";
    Layer l;
    l.q_w = params_.at(p + "attn.query.weight");
    l.q_b = params_.at(p + "attn.query.bias");
    l.k_w = params_.at(p + "attn.key.weight");
    l.k_b = params_.at(p + "attn.key.bias");
    l.v_w = params_.at(p + "attn.value.weight");
    l.v_b = params_.at(p + "attn.value.bias");
    l.o_w = params_.at(p + "attn.output.weight");
    l.o_b = params_.at(p + "attn.output.bias");
    l.attn_ln_w = params_.at(p + "attn.ln.weight");
    l.attn_ln_b = params_.at(p + "attn.ln.bias");
    l.w1 = params_.at(p + "ffn.w1.weight");
    l.b1 = params_.at(p + "ffn.w1.bias");
    l.w2 = params_.at(p + "ffn.w2.weight");
    l.b2 = params_.at(p + "ffn.w2.bias");
    if (auto it = params_.find(p + "ffn.raf"); it != params_.end()) l.raf = it->second;
    l.ffn_ln_w = params_.at(p + "ffn.ln.weight");
    l.ffn_ln_b = params_.at(p + "ffn.ln.bias");
    layers_.push_back(std::move(l));
  }
}

template <typename T>
Tensor<T> TransformerModel<T>::parameter(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw PreconditionError("no parameter named '" + name + "'");
  return it->second;
}

template <typename T>
size_t TransformerModel<T>::parameter_count() const {
  size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

template <typename T>
std::string TransformerModel<T>::layer_raf_name(int layer) {
  return "layer." + std::to_string(layer) + ".ffn.raf";
}

template <typename T>
std::vector<std::string> TransformerModel<T>::raf_names() const {
  std::vector<std::string> names;
  for (int i = 0; i < config_.num_layers; ++i)
    if (config_.activation[static_cast<size_t>(i)].is_rational()) names.push_back(layer_raf_name(i));
  if (config_.pooler_activation.is_rational()) names.push_back("pooler.raf");
  return names;
}

template <typename T>
RationalCoefficients TransformerModel<T>::rational_coefficients(const std::string& raf_name) const {
  const ActivationKind* kind = nullptr;
  if (raf_name == "pooler.raf") {
    kind = &config_.pooler_activation;
  } else {
    for (int i = 0; i < config_.num_layers; ++i)
      if (raf_name == layer_raf_name(i)) kind = &config_.activation[static_cast<size_t>(i)];
  }
  if (kind == nullptr || !kind->is_rational()) throw PreconditionError("'" + raf_name + "' is not a rational activation");
  const Tensor<T> t = parameter(raf_name);
  const std::vector<double> flat(t.data().begin(), t.data().end());
  return RationalCoefficients::from_flat(kind->coeffs.m(), kind->coeffs.n(), flat);
}

template <typename T>
TransformerModel<T> TransformerModel<T>::clone() const {
  TransformerModel copy = *this;
  for (auto& [name, t] : copy.params_) {
    const bool rg = t.requires_grad();
    t = t.detach();
    t.set_requires_grad(rg);
  }
  copy.bind_layers();
  return copy;
}

template <typename T>
Tensor<T> TransformerModel<T>::apply_activation(const Tensor<T>& x, const ActivationKind& kind,
                                                const Tensor<T>& raf) const {
  switch (kind.type) {
    case ActivationType::FixedGELU: return gelu(x);
    case ActivationType::FixedReLU: return relu(x);
    case ActivationType::Rational: return rational(x, raf, kind.coeffs.m(), kind.coeffs.n());
  }
  throw PreconditionError("unknown activation");
}

template <typename T>
Tensor<T> TransformerModel<T>::activation(const Tensor<T>& x, int layer) const {
  if (layer < 0 || layer >= config_.num_layers) throw PreconditionError("activation: layer index out of range");
  return apply_activation(x, config_.activation[static_cast<size_t>(layer)], layers_[static_cast<size_t>(layer)].raf);
}

template <typename T>
Tensor<T> TransformerModel<T>::pooler_activation(const Tensor<T>& x) const {
  auto it = params_.find("pooler.raf");
  return apply_activation(x, config_.pooler_activation, it == params_.end() ? Tensor<T>() : it->second);
}

template <typename T>
Tensor<T> TransformerModel<T>::ffn_branch(const Tensor<T>& x, int layer) const {
  if (layer < 0 || layer >= config_.num_layers) throw PreconditionError("ffn: layer index out of range");
  const auto H = static_cast<size_t>(config_.hidden_size);
  if (x.rank() == 0 || x.shape().back() != H)
    throw ShapeError("ffn: input " + shape_string(x.shape()) + " does not end in hidden size " + std::to_string(H));
  const Layer& l = layers_[static_cast<size_t>(layer)];
  const Tensor<T> flat = x.rank() == 2 ? x : reshape(x, {x.size() / H, H});
  Tensor<T> pre = add_bias(matmul(flat, l.w1), l.b1);
  Tensor<T> out = add_bias(matmul(activation(pre, layer), l.w2), l.b2);
  return x.rank() == 2 ? out : reshape(out, x.shape());
}

template <typename T>
Tensor<T> TransformerModel<T>::ffn_forward(const Tensor<T>& x, int layer) const {
  const Layer& l = layers_.at(static_cast<size_t>(layer));
  return layer_norm(add(ffn_branch(x, layer), x), l.ffn_ln_w, l.ffn_ln_b, config_.layer_norm_eps);
}

template <typename T>
Tensor<T> TransformerModel<T>::attention(const Tensor<T>& h, const Layer& l, const TokenBatch& batch) const {
  const size_t B = batch.batch_size, L = batch.seq_len;
  const auto H = static_cast<size_t>(config_.hidden_size);
  const auto heads = static_cast<size_t>(config_.num_heads);
  const size_t hd = H / heads;
  auto split = [&](const Tensor<T>& w, const Tensor<T>& b) {
    Tensor<T> t = reshape(add_bias(matmul(h, w), b), {B, L, heads, hd});
    return reshape(transpose(t, 1, 2), {B * heads, L, hd});
  };
  const Tensor<T> q = split(l.q_w, l.q_b);
  const Tensor<T> k = split(l.k_w, l.k_b);
  const Tensor<T> v = split(l.v_w, l.v_b);
  Tensor<T> scores = scale(bmm(q, k, true), static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd))));
  scores = mask_keys(scores, batch.attention_mask, B, heads);
  Tensor<T> ctx = bmm(softmax(scores), v);
  ctx = reshape(transpose(reshape(ctx, {B, heads, L, hd}), 1, 2), {B * L, H});
  return add_bias(matmul(ctx, l.o_w), l.o_b);
}

template <typename T>
Tensor<T> TransformerModel<T>::encode_2d(const TokenBatch& batch) const {
  const size_t B = batch.batch_size, L = batch.seq_len;
  if (B == 0 || L == 0) throw PreconditionError("encode: empty batch");
  if (L > static_cast<size_t>(config_.max_seq_len))
    throw PreconditionError("encode: sequence length " + std::to_string(L) + " exceeds max_seq_len " +
                            std::to_string(config_.max_seq_len));
  if (batch.input_ids.size() != B * L || batch.attention_mask.size() != B * L)
    throw ShapeError("encode: ids/mask size does not match batch_size * seq_len");

  std::vector<int32_t> positions(B * L);
  for (size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int32_t>(i % L);
  Tensor<T> h = add(embedding(params_.at("embeddings.word"), std::span<const int32_t>(batch.input_ids)),
                    embedding(params_.at("embeddings.position"), std::span<const int32_t>(positions)));
  h = layer_norm(h, params_.at("embeddings.ln.weight"), params_.at("embeddings.ln.bias"), config_.layer_norm_eps);
  for (size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    h = layer_norm(add(attention(h, l, batch), h), l.attn_ln_w, l.attn_ln_b, config_.layer_norm_eps);
    h = ffn_forward(h, static_cast<int>(i));
  }
  return h;
}

template <typename T>
ModelOutput<T> TransformerModel<T>::encode(const TokenBatch& batch) const {
  ModelOutput<T> out;
  out.hidden_states = reshape(encode_2d(batch), {batch.batch_size, batch.seq_len, static_cast<size_t>(config_.hidden_size)});
  return out;
}

template <typename T>
Tensor<T> TransformerModel<T>::mlm_logits(const TokenBatch& batch) const {
  const Tensor<T> h = encode_2d(batch);
  const Tensor<T>& decoder = config_.tie_embeddings ? params_.at("embeddings.word") : params_.at("mlm.decoder.weight");
  return add_bias(matmul(h, decoder, true), params_.at("mlm.bias"));
}

template <typename T>
Tensor<T> TransformerModel<T>::mlm_loss(const MaskedBatch& batch) const {
  if (batch.labels.size() != batch.tokens.input_ids.size()) throw ShapeError("mlm_loss: labels do not match ids");
  std::vector<size_t> rows;
  std::vector<int32_t> targets;
  for (size_t i = 0; i < batch.labels.size(); ++i) {
    if (batch.labels[i] == kIgnoreLabel) continue;
    rows.push_back(i);
    targets.push_back(batch.labels[i]);
  }
  if (rows.empty()) throw UndefinedLossError("mlm_loss: batch has no masked positions");
  const Tensor<T> h = gather_rows(encode_2d(batch.tokens), std::span<const size_t>(rows));
  const Tensor<T>& decoder = config_.tie_embeddings ? params_.at("embeddings.word") : params_.at("mlm.decoder.weight");
  const Tensor<T> logits = add_bias(matmul(h, decoder, true), params_.at("mlm.bias"));
  return cross_entropy(logits, std::span<const int32_t>(targets));
}

template <typename T>
Tensor<T> TransformerModel<T>::classifier_logits(const Tensor<T>& pooled) const {
  if (!has_classifier()) throw PreconditionError("classify: model has no classification head");
  Tensor<T> z = add_bias(matmul(pooled, params_.at("pooler.weight")), params_.at("pooler.bias"));
  z = pooler_activation(z);
  return add_bias(matmul(z, params_.at("classifier.weight")), params_.at("classifier.bias"));
}

template <typename T>
ModelOutput<T> TransformerModel<T>::classify(const TokenBatch& batch, std::span<const int32_t> labels) const {
  if (!labels.empty() && labels.size() != batch.batch_size)
    throw ShapeError("classify: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(batch.batch_size));
  const Tensor<T> h = encode_2d(batch);
  std::vector<size_t> first(batch.batch_size);
  for (size_t b = 0; b < batch.batch_size; ++b) first[b] = b * batch.seq_len;
  ModelOutput<T> out;
  out.hidden_states = reshape(h, {batch.batch_size, batch.seq_len, static_cast<size_t>(config_.hidden_size)});
  out.logits = classifier_logits(gather_rows(h, std::span<const size_t>(first)));
  if (!labels.empty()) {
    for (int32_t l : labels)
      if (l < 0 || l >= config_.num_classes)
        throw DomainError("classify: label " + std::to_string(l) + " outside [0, " +
                          std::to_string(config_.num_classes) + ")");
    out.loss = cross_entropy(out.logits, labels);
  }
  return out;
}

template class TransformerModel<float>;
template class TransformerModel<double>;

}  // namespace raft
