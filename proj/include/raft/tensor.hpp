// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace raft {

using Shape = std::vector<size_t>;

std::string shape_string(const Shape& shape);
size_t shape_numel(const Shape& shape);

enum class OpKind {
  Leaf,
  Add,
  AddBias,
  Mul,
  Scale,
  MatMul,
  BatchedMatMul,
  Transpose,
  Reshape,
  Softmax,
  MaskKeys,
  LayerNorm,
  Gelu,
  Relu,
  Rational,
  Embedding,
  GatherRows,
  CrossEntropy,
  Sum,
  Mean,
};

template <typename T>
struct TapeNode {
  OpKind op = OpKind::Leaf;
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty unless requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<TapeNode>> inputs;
  std::function<void(TapeNode&)> backward_rule;
};

/// Dense row-major tensor with reverse-mode gradient tracking.
///
/// Tensor is a handle: copies share storage and tape position. Ops record
/// a node only when at least one input requires grad, so inference on
/// frozen weights builds no graph.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  size_t rank() const { return node_->shape.size(); }
  size_t dim(size_t i) const { return node_->shape.at(i); }
  size_t size() const { return node_->data.size(); }
  OpKind op() const { return node_->op; }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  const std::vector<T>& values() const { return node_->data; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  /// Only valid on leaves. Turning tracking off releases the grad buffer.
  void set_requires_grad(bool on);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }
  /// Zero-filled grad buffer (allocated when the tensor requires grad).
  void zero_grad();

  /// Fresh leaf with a copy of the data and no tape.
  Tensor detach() const;

  TapeNode<T>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<TapeNode<T>>& node_ptr() const noexcept { return node_; }

  /// Wraps a node produced by an op. When no input requires grad the node
  /// is a plain value with no tape edges.
  static Tensor make_result(OpKind op, Shape shape, std::vector<T> data, std::vector<Tensor> inputs,
                            std::function<void(TapeNode<T>&)> rule);

 private:
  explicit Tensor(std::shared_ptr<TapeNode<T>> node) : node_(std::move(node)) {}
  std::shared_ptr<TapeNode<T>> node_;
};

/// While alive, ops on this thread record no tape (evaluation passes).
class NoGradGuard {
 public:
  NoGradGuard() noexcept;
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool grad_enabled() noexcept;

 private:
  bool previous_;
};

/// Populates grad on every requires_grad tensor reachable from `loss`.
/// Leaf gradients accumulate across calls; interior gradients are reset.
template <typename T>
void backward(const Tensor<T>& loss);

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
/// x[..., d] + bias[d]
template <typename T> Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);

/// a[m,k] . b[k,n], or a[m,k] . b[n,k]^T when transpose_b.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);
/// Per-batch matmul on rank-3 tensors.
template <typename T> Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

template <typename T> Tensor<T> transpose(const Tensor<T>& x, size_t dim0, size_t dim1);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Softmax over the last dimension. Rows that are entirely -inf give zeros.
template <typename T> Tensor<T> softmax(const Tensor<T>& x);

/// scores[batch*heads, q, k] with key k of sequence b set to -inf where
/// key_mask[b*k_len + k] == 0.
template <typename T>
Tensor<T> mask_keys(const Tensor<T>& scores, std::span<const uint8_t> key_mask, size_t batch, size_t heads);

/// Normalizes over the last dimension (population variance), then gamma*x+beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps = 1e-12);

/// 0.5 x (1 + erf(x / sqrt 2))
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);

/// Elementwise safe rational activation. `coeffs` is the flat list
/// [a_0..a_m, b_1..b_n]; evaluation is carried out in double precision.
template <typename T> Tensor<T> rational(const Tensor<T>& x, const Tensor<T>& coeffs, int m, int n);

/// table[V,D] rows selected by ids -> [ids.size(), D]. Throws DomainError on
/// an out-of-range id.
template <typename T> Tensor<T> embedding(const Tensor<T>& table, std::span<const int32_t> ids);
template <typename T> Tensor<T> gather_rows(const Tensor<T>& x, std::span<const size_t> rows);

inline constexpr int32_t kIgnoreIndex = -1;

/// Mean cross-entropy of logits[N,C] over targets != ignore_index.
/// Throws UndefinedLossError if every target is ignored.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int32_t> targets, int32_t ignore_index = kIgnoreIndex);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

}  // namespace raft
