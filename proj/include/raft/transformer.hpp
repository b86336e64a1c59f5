// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "raft/data.hpp"
#include "raft/errors.hpp"
#include "raft/rational.hpp"
#include "raft/tensor.hpp"

namespace raft {

enum class ActivationType { FixedGELU, FixedReLU, Rational };

/// Nonlinearity of one FFN (or the pooler). For Rational, `coeffs` holds
/// the initial coefficients; the learned values live in the model's
/// parameter tensor.
struct ActivationKind {
  ActivationType type = ActivationType::FixedGELU;
  RationalCoefficients coeffs;
  bool trainable = true;

  static ActivationKind fixed_gelu() { return {}; }
  static ActivationKind fixed_relu() { return {ActivationType::FixedReLU, {}, false}; }
  static ActivationKind rational(RationalCoefficients c, bool trainable = true) {
    return {ActivationType::Rational, std::move(c), trainable};
  }

  bool is_rational() const noexcept { return type == ActivationType::Rational; }
  /// Same type and, for rationals, same degrees and trainability.
  bool same_kind(const ActivationKind& other) const noexcept;
};

enum class InitScheme { Standard, ResidualScaled };

struct TransformerConfig {
  int num_layers = 12;
  int hidden_size = 768;
  int num_heads = 12;
  int ffn_size = 3072;
  int vocab_size = 30522;
  int max_seq_len = 128;
  std::vector<ActivationKind> activation;  // one per layer
  ActivationKind pooler_activation;
  int num_classes = 0;  // 0 = no classification head
  InitScheme init_scheme = InitScheme::Standard;
  bool tie_embeddings = true;
  double init_std = 0.02;
  double layer_norm_eps = 1e-12;

  /// Same activation in every layer and the pooler; ffn_size = 4 * hidden.
  static TransformerConfig uniform(int layers, int hidden, int heads, int vocab, int max_seq_len,
                                   const ActivationKind& act);

  void validate() const;
  /// Equal in every field except the initial rational coefficient values.
  bool same_architecture(const TransformerConfig& other) const;
  size_t num_rafs() const;
};

std::string to_json(const TransformerConfig& config);
TransformerConfig transformer_config_from_json(std::string_view json);

template <typename T>
struct ModelOutput {
  Tensor<T> hidden_states;  // (batch, seq, hidden)
  Tensor<T> logits;
  std::optional<Tensor<T>> loss;
};

/// Encoder-only post-LayerNorm transformer (BERT layout) with learned
/// absolute positions, a tied MLM decoder and an optional pooled
/// classification head.
///
/// Parameter names:
///   embeddings.{word,position}, embeddings.ln.{weight,bias}
///   layer.<i>.attn.{query,key,value,output}.{weight,bias}, layer.<i>.attn.ln.*
///   layer.<i>.ffn.w1.*, layer.<i>.ffn.w2.*, layer.<i>.ffn.raf, layer.<i>.ffn.ln.*
///   mlm.bias (+ mlm.decoder.weight when untied)
///   pooler.{weight,bias,raf}, classifier.{weight,bias}
/// Linear weights are stored (in, out) so y = x W + b.
template <typename T>
class TransformerModel {
 public:
  /// Every parameter draws from its own stream seeded by (seed, name), so
  /// initial weights do not depend on the activation choice.
  TransformerModel(TransformerConfig config, uint64_t seed);

  const TransformerConfig& config() const noexcept { return config_; }

  ModelOutput<T> encode(const TokenBatch& batch) const;

  /// LayerNorm(ffn_branch(x) + x) for layer `layer`; x has last dim hidden.
  Tensor<T> ffn_forward(const Tensor<T>& x, int layer) const;
  /// W2 Act(W1 x + b1) + b2
  Tensor<T> ffn_branch(const Tensor<T>& x, int layer) const;
  /// The layer's nonlinearity applied elementwise.
  Tensor<T> activation(const Tensor<T>& x, int layer) const;
  Tensor<T> pooler_activation(const Tensor<T>& x) const;

  /// Decoder logits for every position, (batch * seq, vocab).
  Tensor<T> mlm_logits(const TokenBatch& batch) const;
  /// Mean cross-entropy over labelled positions only.
  Tensor<T> mlm_loss(const MaskedBatch& batch) const;

  /// First-token pooling -> pooler dense + activation -> classifier.
  /// Loss is set when labels are given.
  ModelOutput<T> classify(const TokenBatch& batch, std::span<const int32_t> labels = {}) const;
  /// Pooler and classifier applied to an already pooled (batch, hidden) input.
  Tensor<T> classifier_logits(const Tensor<T>& pooled) const;

  /// Adds (or replaces) pooler-independent classifier weights.
  void attach_classifier(int num_classes, uint64_t seed);
  bool has_classifier() const noexcept { return config_.num_classes > 0; }

  const std::map<std::string, Tensor<T>>& parameters() const noexcept { return params_; }
  Tensor<T> parameter(const std::string& name) const;
  size_t parameter_count() const;

  /// "layer.<i>.ffn.raf" for each rational layer, then "pooler.raf".
  std::vector<std::string> raf_names() const;
  /// Current coefficients of a RAF parameter.
  RationalCoefficients rational_coefficients(const std::string& raf_name) const;
  static std::string layer_raf_name(int layer);

  /// Deep copy with no shared storage.
  TransformerModel clone() const;
  /// Copies every parameter value from `other`, which must share the architecture.
  template <typename U>
  void copy_parameters_from(const TransformerModel<U>& other);

 private:
  struct Layer {
    Tensor<T> q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b, attn_ln_w, attn_ln_b;
    Tensor<T> w1, b1, w2, b2, raf, ffn_ln_w, ffn_ln_b;
  };

  Tensor<T> add_param(const std::string& name, Shape shape, uint64_t seed, double stddev, bool requires_grad = true);
  Tensor<T> add_const_param(const std::string& name, Shape shape, T value);
  void bind_layers();
  Tensor<T> apply_activation(const Tensor<T>& x, const ActivationKind& kind, const Tensor<T>& raf) const;
  Tensor<T> attention(const Tensor<T>& h, const Layer& layer, const TokenBatch& batch) const;
  Tensor<T> encode_2d(const TokenBatch& batch) const;

  TransformerConfig config_;
  std::map<std::string, Tensor<T>> params_;
  std::vector<Layer> layers_;
};

template <typename T>
template <typename U>
void TransformerModel<T>::copy_parameters_from(const TransformerModel<U>& other) {
  if (!config_.same_architecture(other.config()))
    throw ConfigMismatchError("copy_parameters_from: architectures differ");
  for (auto& [name, dst] : params_) {
    const Tensor<U> src = other.parameter(name);
    if (src.shape() != dst.shape()) throw ConfigMismatchError("copy_parameters_from: shape mismatch for " + name);
    for (size_t i = 0; i < dst.size(); ++i) dst.data()[i] = static_cast<T>(src.data()[i]);
  }
}

extern template class TransformerModel<float>;
extern template class TransformerModel<double>;

}  // namespace raft
