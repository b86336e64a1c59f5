// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#include "raft/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "raft/errors.hpp"
#include "raft/rational.hpp"

namespace raft {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (size_t i = 0; i < shape.size(); ++i) out << (i ? ", " : "") << shape[i];
  out << ')';
  return out.str();
}

size_t shape_numel(const Shape& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
ConstMapMat<T> view(const std::vector<T>& v, size_t rows, size_t cols, size_t offset = 0) {
  return ConstMapMat<T>(v.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
MapMat<T> view_mut(std::vector<T>& v, size_t rows, size_t cols, size_t offset = 0) {
  return MapMat<T>(v.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
TapeNode<T>& input(TapeNode<T>& self, size_t i) {
  return *self.inputs[i];
}

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw ShapeError(op + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

void require_rank(const std::string& op, const Shape& s, size_t rank) {
  if (s.size() != rank)
    throw ShapeError(op + ": expected rank " + std::to_string(rank) + ", got " + shape_string(s));
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() noexcept : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool NoGradGuard::grad_enabled() noexcept { return g_grad_enabled; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape_numel(shape) != data.size())
    throw ShapeError("tensor: shape " + shape_string(shape) + " does not hold " + std::to_string(data.size()) +
                     " elements");
  auto node = std::make_shared<TapeNode<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw ShapeError("item: tensor of shape " + shape_string(shape()) + " is not a scalar");
  return node_->data[0];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  if (node_->op != OpKind::Leaf) throw PreconditionError("set_requires_grad: only leaf tensors can be toggled");
  node_->requires_grad = on;
  if (!on) {
    node_->grad.clear();
    node_->grad.shrink_to_fit();
  }
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_->requires_grad)
    node_->grad.assign(node_->data.size(), T(0));
  else
    std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(node_->shape, node_->data, false);
}

template <typename T>
Tensor<T> Tensor<T>::make_result(OpKind op, Shape shape, std::vector<T> data, std::vector<Tensor> inputs,
                                 std::function<void(TapeNode<T>&)> rule) {
  auto node = std::make_shared<TapeNode<T>>();
  node->op = op;
  node->shape = std::move(shape);
  node->data = std::move(data);
  const bool tracked = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (tracked) {
    node->requires_grad = true;
    for (auto& t : inputs) node->inputs.push_back(t.node_);
    node->backward_rule = std::move(rule);
  }
  return Tensor(std::move(node));
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw PreconditionError("backward: loss must be a scalar, got shape " +
                            (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order with inputs first.
  std::vector<TapeNode<T>*> order;
  std::unordered_set<TapeNode<T>*> seen;
  std::vector<std::pair<TapeNode<T>*, size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      TapeNode<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (TapeNode<T>* node : order) {
    if (node->op == OpKind::Leaf) {
      if (node->grad.size() != node->data.size()) node->grad.assign(node->data.size(), T(0));
    } else {
      node->grad.assign(node->data.size(), T(0));
    }
  }
  loss.node()->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_rule) (*it)->backward_rule(**it);
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  std::vector<T> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor<T>::make_result(OpKind::Add, a.shape(), std::move(out), {a, b}, [](TapeNode<T>& self) {
    for (size_t k = 0; k < 2; ++k) {
      auto& in = input(self, k);
      if (!in.requires_grad) continue;
      for (size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (bias.rank() != 1 || x.rank() == 0 || x.shape().back() != bias.size()) shape_error("add_bias", x.shape(), bias.shape());
  const size_t d = bias.size();
  std::vector<T> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] + bias.data()[i % d];
  return Tensor<T>::make_result(OpKind::AddBias, x.shape(), std::move(out), {x, bias}, [d](TapeNode<T>& self) {
    auto& in = input(self, 0);
    auto& b = input(self, 1);
    if (in.requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
    if (b.requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) b.grad[i % d] += self.grad[i];
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  std::vector<T> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor<T>::make_result(OpKind::Mul, a.shape(), std::move(out), {a, b}, [](TapeNode<T>& self) {
    auto& x = input(self, 0);
    auto& y = input(self, 1);
    if (x.requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += self.grad[i] * y.data[i];
    if (y.requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) y.grad[i] += self.grad[i] * x.data[i];
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  return Tensor<T>::make_result(OpKind::Scale, x.shape(), std::move(out), {x}, [factor](TapeNode<T>& self) {
    auto& in = input(self, 0);
    for (size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i] * factor;
  });
}

// ---------------------------------------------------------------------------
// Products

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  require_rank("matmul", a.shape(), 2);
  require_rank("matmul", b.shape(), 2);
  const size_t m = a.dim(0), k = a.dim(1);
  const size_t n = transpose_b ? b.dim(0) : b.dim(1);
  if ((transpose_b ? b.dim(1) : b.dim(0)) != k) shape_error("matmul", a.shape(), b.shape());

  std::vector<T> out(m * n);
  auto c = view_mut(out, m, n);
  auto av = view(a.values(), m, k);
  if (transpose_b)
    c.noalias() = av * view(b.values(), n, k).transpose();
  else
    c.noalias() = av * view(b.values(), k, n);

  return Tensor<T>::make_result(OpKind::MatMul, {m, n}, std::move(out), {a, b},
                                [m, k, n, transpose_b](TapeNode<T>& self) {
                                  auto& x = input(self, 0);
                                  auto& y = input(self, 1);
                                  auto g = view(self.grad, m, n);
                                  if (x.requires_grad) {
                                    if (transpose_b)
                                      view_mut(x.grad, m, k).noalias() += g * view(y.data, n, k);
                                    else
                                      view_mut(x.grad, m, k).noalias() += g * view(y.data, k, n).transpose();
                                  }
                                  if (y.requires_grad) {
                                    if (transpose_b)
                                      view_mut(y.grad, n, k).noalias() += g.transpose() * view(x.data, m, k);
                                    else
                                      view_mut(y.grad, k, n).noalias() += view(x.data, m, k).transpose() * g;
                                  }
                                });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  require_rank("bmm", a.shape(), 3);
  require_rank("bmm", b.shape(), 3);
  const size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const size_t n = transpose_b ? b.dim(1) : b.dim(2);
  if (b.dim(0) != batch || (transpose_b ? b.dim(2) : b.dim(1)) != k) shape_error("bmm", a.shape(), b.shape());

  std::vector<T> out(batch * m * n);
  for (size_t i = 0; i < batch; ++i) {
    auto c = view_mut(out, m, n, i * m * n);
    auto av = view(a.values(), m, k, i * m * k);
    if (transpose_b)
      c.noalias() = av * view(b.values(), n, k, i * n * k).transpose();
    else
      c.noalias() = av * view(b.values(), k, n, i * k * n);
  }
  return Tensor<T>::make_result(
      OpKind::BatchedMatMul, {batch, m, n}, std::move(out), {a, b}, [batch, m, k, n, transpose_b](TapeNode<T>& self) {
        auto& x = input(self, 0);
        auto& y = input(self, 1);
        for (size_t i = 0; i < batch; ++i) {
          auto g = view(self.grad, m, n, i * m * n);
          if (x.requires_grad) {
            auto gx = view_mut(x.grad, m, k, i * m * k);
            if (transpose_b)
              gx.noalias() += g * view(y.data, n, k, i * n * k);
            else
              gx.noalias() += g * view(y.data, k, n, i * k * n).transpose();
          }
          if (y.requires_grad) {
            if (transpose_b)
              view_mut(y.grad, n, k, i * n * k).noalias() += g.transpose() * view(x.data, m, k, i * m * k);
            else
              view_mut(y.grad, k, n, i * k * n).noalias() += view(x.data, m, k, i * m * k).transpose() * g;
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Layout

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, size_t dim0, size_t dim1) {
  const Shape& in_shape = x.shape();
  if (dim0 >= in_shape.size() || dim1 >= in_shape.size())
    throw ShapeError("transpose: dims out of range for shape " + shape_string(in_shape));
  Shape out_shape = in_shape;
  std::swap(out_shape[dim0], out_shape[dim1]);

  const size_t rank = in_shape.size();
  std::vector<size_t> in_strides(rank, 1);
  for (size_t d = rank; d-- > 1;) in_strides[d - 1] = in_strides[d] * in_shape[d];
  std::vector<size_t> strides = in_strides;  // input stride of each output axis
  std::swap(strides[dim0], strides[dim1]);

  auto source = std::make_shared<std::vector<size_t>>(x.size());
  std::vector<size_t> index(rank, 0);
  size_t offset = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    (*source)[i] = offset;
    for (size_t d = rank; d-- > 0;) {
      ++index[d];
      offset += strides[d];
      if (index[d] < out_shape[d]) break;
      offset -= strides[d] * index[d];
      index[d] = 0;
    }
  }
  std::vector<T> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[(*source)[i]];
  return Tensor<T>::make_result(OpKind::Transpose, out_shape, std::move(out), {x}, [source](TapeNode<T>& self) {
    auto& in = input(self, 0);
    for (size_t i = 0; i < self.grad.size(); ++i) in.grad[(*source)[i]] += self.grad[i];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.size()) shape_error("reshape", x.shape(), shape);
  std::vector<T> out(x.values());
  return Tensor<T>::make_result(OpKind::Reshape, std::move(shape), std::move(out), {x}, [](TapeNode<T>& self) {
    auto& in = input(self, 0);
    for (size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Normalization and attention

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  if (x.rank() == 0) throw ShapeError("softmax: scalar input");
  const size_t d = x.shape().back();
  const size_t rows = d == 0 ? 0 : x.size() / d;
  std::vector<T> out(x.size(), T(0));
  for (size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * d;
    T* o = out.data() + r * d;
    const T mx = *std::max_element(in, in + d);
    if (mx == -std::numeric_limits<T>::infinity()) continue;
    T total = 0;
    for (size_t i = 0; i < d; ++i) total += (o[i] = std::exp(in[i] - mx));
    for (size_t i = 0; i < d; ++i) o[i] /= total;
  }
  return Tensor<T>::make_result(OpKind::Softmax, x.shape(), std::move(out), {x}, [rows, d](TapeNode<T>& self) {
    auto& in = input(self, 0);
    for (size_t r = 0; r < rows; ++r) {
      const T* y = self.data.data() + r * d;
      const T* g = self.grad.data() + r * d;
      T dot = 0;
      for (size_t i = 0; i < d; ++i) dot += g[i] * y[i];
      T* gx = in.grad.data() + r * d;
      for (size_t i = 0; i < d; ++i) gx[i] += y[i] * (g[i] - dot);
    }
  });
}

template <typename T>
Tensor<T> mask_keys(const Tensor<T>& scores, std::span<const uint8_t> key_mask, size_t batch, size_t heads) {
  require_rank("mask_keys", scores.shape(), 3);
  const size_t q_len = scores.dim(1), k_len = scores.dim(2);
  if (scores.dim(0) != batch * heads || key_mask.size() != batch * k_len)
    throw ShapeError("mask_keys: scores " + shape_string(scores.shape()) + " vs mask of " +
                     std::to_string(key_mask.size()) + " entries for batch " + std::to_string(batch));
  auto keep = std::make_shared<std::vector<uint8_t>>(scores.size());
  std::vector<T> out(scores.values());
  for (size_t bh = 0; bh < batch * heads; ++bh) {
    const size_t b = bh / heads;
    for (size_t q = 0; q < q_len; ++q) {
      for (size_t k = 0; k < k_len; ++k) {
        const size_t i = (bh * q_len + q) * k_len + k;
        (*keep)[i] = key_mask[b * k_len + k] != 0;
        if (!(*keep)[i]) out[i] = -std::numeric_limits<T>::infinity();
      }
    }
  }
  return Tensor<T>::make_result(OpKind::MaskKeys, scores.shape(), std::move(out), {scores}, [keep](TapeNode<T>& self) {
    auto& in = input(self, 0);
    for (size_t i = 0; i < self.grad.size(); ++i)
      if ((*keep)[i]) in.grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
  if (x.rank() == 0 || gamma.rank() != 1 || beta.rank() != 1 || gamma.size() != x.shape().back() ||
      beta.size() != gamma.size())
    shape_error("layer_norm", x.shape(), gamma.shape());
  const size_t d = gamma.size();
  const size_t rows = x.size() / d;
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  std::vector<T> out(x.size());
  for (size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * d;
    double mu = 0.0;
    for (size_t i = 0; i < d; ++i) mu += in[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (size_t i = 0; i < d; ++i) var += (in[i] - mu) * (in[i] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = static_cast<T>(rs);
    for (size_t i = 0; i < d; ++i) {
      const T h = static_cast<T>((in[i] - mu) * rs);
      (*xhat)[r * d + i] = h;
      out[r * d + i] = gamma.data()[i] * h + beta.data()[i];
    }
  }
  return Tensor<T>::make_result(OpKind::LayerNorm, x.shape(), std::move(out), {x, gamma, beta},
                                [d, rows, xhat, rstd](TapeNode<T>& self) {
                                  auto& in = input(self, 0);
                                  auto& g = input(self, 1);
                                  auto& b = input(self, 2);
                                  for (size_t r = 0; r < rows; ++r) {
                                    const T* up = self.grad.data() + r * d;
                                    const T* h = xhat->data() + r * d;
                                    if (g.requires_grad)
                                      for (size_t i = 0; i < d; ++i) g.grad[i] += up[i] * h[i];
                                    if (b.requires_grad)
                                      for (size_t i = 0; i < d; ++i) b.grad[i] += up[i];
                                    if (!in.requires_grad) continue;
                                    double mean_dh = 0.0, mean_dh_h = 0.0;
                                    for (size_t i = 0; i < d; ++i) {
                                      const double dh = up[i] * g.data[i];
                                      mean_dh += dh;
                                      mean_dh_h += dh * h[i];
                                    }
                                    mean_dh /= static_cast<double>(d);
                                    mean_dh_h /= static_cast<double>(d);
                                    const double rs = (*rstd)[r];
                                    T* gx = in.grad.data() + r * d;
                                    for (size_t i = 0; i < d; ++i) {
                                      const double dh = up[i] * g.data[i];
                                      gx[i] += static_cast<T>(rs * (dh - mean_dh - h[i] * mean_dh_h));
                                    }
                                  }
                                });
}

// ---------------------------------------------------------------------------
// Activations

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) {
    const double v = x.data()[i];
    out[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)));
  }
  return Tensor<T>::make_result(OpKind::Gelu, x.shape(), std::move(out), {x}, [](TapeNode<T>& self) {
    auto& in = input(self, 0);
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const double v = in.data[i];
      const double d = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      in.grad[i] += static_cast<T>(self.grad[i] * d);
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
  return Tensor<T>::make_result(OpKind::Relu, x.shape(), std::move(out), {x}, [](TapeNode<T>& self) {
    auto& in = input(self, 0);
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (in.data[i] > T(0)) in.grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> rational(const Tensor<T>& x, const Tensor<T>& coeffs, int m, int n) {
  if (m < 0 || n < 0 || coeffs.rank() != 1 || coeffs.size() != static_cast<size_t>(m + 1 + n))
    throw ShapeError("rational: coefficient tensor " + shape_string(coeffs.shape()) + " does not match degrees (" +
                     std::to_string(m) + ", " + std::to_string(n) + ")");
  const size_t nm = static_cast<size_t>(m + 1);
  const size_t nn = static_cast<size_t>(n);
  std::vector<double> c(coeffs.data().begin(), coeffs.data().end());
  const std::span<const double> num(c.data(), nm), den(c.data() + nm, nn);
  std::vector<T> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(kernel::value(x.data()[i], num, den));

  return Tensor<T>::make_result(OpKind::Rational, x.shape(), std::move(out), {x, coeffs},
                                [c = std::move(c), nm, nn](TapeNode<T>& self) {
                                  auto& in = input(self, 0);
                                  auto& cf = input(self, 1);
                                  const std::span<const double> num(c.data(), nm), den(c.data() + nm, nn);
                                  std::vector<double> d_num(nm, 0.0), d_den(nn, 0.0);
                                  for (size_t i = 0; i < self.grad.size(); ++i) {
                                    const double g = self.grad[i];
                                    const double dx = kernel::accumulate(in.data[i], g, num, den, d_num, d_den);
                                    if (in.requires_grad) in.grad[i] += static_cast<T>(g * dx);
                                  }
                                  if (cf.requires_grad) {
                                    for (size_t j = 0; j < nm; ++j) cf.grad[j] += static_cast<T>(d_num[j]);
                                    for (size_t k = 0; k < nn; ++k) cf.grad[nm + k] += static_cast<T>(d_den[k]);
                                  }
                                });
}

// ---------------------------------------------------------------------------
// Indexing and losses

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int32_t> ids) {
  require_rank("embedding", table.shape(), 2);
  const size_t vocab = table.dim(0), d = table.dim(1);
  auto rows = std::make_shared<std::vector<size_t>>(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<size_t>(ids[i]) >= vocab)
      throw DomainError("embedding: id " + std::to_string(ids[i]) + " out of range [0, " + std::to_string(vocab) + ")");
    (*rows)[i] = static_cast<size_t>(ids[i]);
  }
  std::vector<T> out(ids.size() * d);
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table.data().data() + (*rows)[i] * d, d, out.data() + i * d);
  return Tensor<T>::make_result(OpKind::Embedding, {ids.size(), d}, std::move(out), {table},
                                [rows, d](TapeNode<T>& self) {
                                  auto& tab = input(self, 0);
                                  for (size_t i = 0; i < rows->size(); ++i) {
                                    T* dst = tab.grad.data() + (*rows)[i] * d;
                                    const T* src = self.grad.data() + i * d;
                                    for (size_t j = 0; j < d; ++j) dst[j] += src[j];
                                  }
                                });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const size_t> rows) {
  require_rank("gather_rows", x.shape(), 2);
  const size_t n = x.dim(0), d = x.dim(1);
  auto idx = std::make_shared<std::vector<size_t>>(rows.begin(), rows.end());
  std::vector<T> out(rows.size() * d);
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range");
    std::copy_n(x.data().data() + rows[i] * d, d, out.data() + i * d);
  }
  return Tensor<T>::make_result(OpKind::GatherRows, {rows.size(), d}, std::move(out), {x}, [idx, d](TapeNode<T>& self) {
    auto& in = input(self, 0);
    for (size_t i = 0; i < idx->size(); ++i) {
      T* dst = in.grad.data() + (*idx)[i] * d;
      const T* src = self.grad.data() + i * d;
      for (size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int32_t> targets, int32_t ignore_index) {
  require_rank("cross_entropy", logits.shape(), 2);
  const size_t n = logits.dim(0), c = logits.dim(1);
  if (targets.size() != n)
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(n) + " rows");
  auto probs = std::make_shared<std::vector<T>>(logits.size(), T(0));
  auto labels = std::make_shared<std::vector<int32_t>>(targets.begin(), targets.end());
  double total = 0.0;
  size_t count = 0;
  for (size_t r = 0; r < n; ++r) {
    const int32_t t = targets[r];
    if (t == ignore_index) continue;
    if (t < 0 || static_cast<size_t>(t) >= c)
      throw DomainError("cross_entropy: target " + std::to_string(t) + " out of range [0, " + std::to_string(c) + ")");
    const T* row = logits.data().data() + r * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (size_t i = 0; i < c; ++i) z += std::exp(row[i] - mx);
    for (size_t i = 0; i < c; ++i) (*probs)[r * c + i] = static_cast<T>(std::exp(row[i] - mx) / z);
    total += mx + std::log(z) - row[t];
    ++count;
  }
  if (count == 0) throw UndefinedLossError("cross_entropy: every target is ignored");
  const double loss = total / static_cast<double>(count);
  return Tensor<T>::make_result(OpKind::CrossEntropy, {}, {static_cast<T>(loss)}, {logits},
                                [probs, labels, c, count, ignore_index](TapeNode<T>& self) {
                                  auto& in = input(self, 0);
                                  const T g = self.grad[0] / static_cast<T>(count);
                                  for (size_t r = 0; r < labels->size(); ++r) {
                                    const int32_t t = (*labels)[r];
                                    if (t == ignore_index) continue;
                                    for (size_t i = 0; i < c; ++i) in.grad[r * c + i] += g * (*probs)[r * c + i];
                                    in.grad[r * c + static_cast<size_t>(t)] -= g;
                                  }
                                });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double total = 0.0;
  for (T v : x.data()) total += v;
  return Tensor<T>::make_result(OpKind::Sum, {}, {static_cast<T>(total)}, {x}, [](TapeNode<T>& self) {
    auto& in = input(self, 0);
    for (auto& g : in.grad) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.size() == 0) throw ShapeError("mean: empty tensor");
  double total = 0.0;
  for (T v : x.data()) total += v;
  const T inv = T(1) / static_cast<T>(x.size());
  return Tensor<T>::make_result(OpKind::Mean, {}, {static_cast<T>(total / static_cast<double>(x.size()))}, {x},
                                [inv](TapeNode<T>& self) {
                                  auto& in = input(self, 0);
                                  for (auto& g : in.grad) g += self.grad[0] * inv;
                                });
}

#define RAFT_INSTANTIATE_TENSOR(T)                                                                         \
  template class Tensor<T>;                                                                                \
  template void backward<T>(const Tensor<T>&);                                                             \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> add_bias<T>(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                                        \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&, bool);                                  \
  template Tensor<T> bmm<T>(const Tensor<T>&, const Tensor<T>&, bool);                                     \
  template Tensor<T> transpose<T>(const Tensor<T>&, size_t, size_t);                                       \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                                  \
  template Tensor<T> softmax<T>(const Tensor<T>&);                                                         \
  template Tensor<T> mask_keys<T>(const Tensor<T>&, std::span<const uint8_t>, size_t, size_t);             \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);          \
  template Tensor<T> gelu<T>(const Tensor<T>&);                                                            \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                            \
  template Tensor<T> rational<T>(const Tensor<T>&, const Tensor<T>&, int, int);                            \
  template Tensor<T> embedding<T>(const Tensor<T>&, std::span<const int32_t>);                             \
  template Tensor<T> gather_rows<T>(const Tensor<T>&, std::span<const size_t>);                            \
  template Tensor<T> cross_entropy<T>(const Tensor<T>&, std::span<const int32_t>, int32_t);                \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                             \
  template Tensor<T> mean<T>(const Tensor<T>&);

RAFT_INSTANTIATE_TENSOR(float)
RAFT_INSTANTIATE_TENSOR(double)

#undef RAFT_INSTANTIATE_TENSOR

}  // namespace raft
