// Copyright 2026 The Spellforge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "spellforge/autodiff/tensor.hpp"
#include "spellforge/error.hpp"
#include "spellforge/rng.hpp"

// Kernel set for the encoders. Matrices are row-major [rows, cols]; batched
// sequence data is packed as [batch * seq_len, features].

namespace spellforge::ad {

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
MatMap<T> view(std::vector<T>& v, std::size_t offset, std::size_t r, std::size_t c) {
  return MatMap<T>(v.data() + offset, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
template <typename T>
ConstMatMap<T> cview(const std::vector<T>& v, std::size_t offset, std::size_t r, std::size_t c) {
  return ConstMatMap<T>(v.data() + offset, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

[[noreturn]] inline void shape_error(const char* kernel, const Shape& a, const Shape& b) {
  fail(ErrorCode::kShapeMismatch,
       std::string(kernel) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

template <typename T>
void require_matrix(const char* kernel, const Tensor<T>& t) {
  if (t.rank() != 2) fail(ErrorCode::kShapeMismatch, std::string(kernel) + ": expected a matrix, got " + to_string(t.shape()));
}

}  // namespace detail

// [m,k] x [k,n] -> [m,n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix("matmul", a);
  detail::require_matrix("matmul", b);
  if (a.cols() != b.rows()) detail::shape_error("matmul", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  auto out = make_result<T>({m, n}, {a, b}, "matmul");
  detail::view(out.values(), 0, m, n).noalias() = detail::cview(a.values(), 0, m, k) * detail::cview(b.values(), 0, k, n);
  if (out.requires_grad()) {
    out.node()->backward_fn = [m, k, n](Node<T>& self) {
      auto& A = *self.parents[0];
      auto& B = *self.parents[1];
      auto dC = detail::cview(self.grad, 0, m, n);
      if (A.requires_grad) {
        detail::view(A.ensure_grad(), 0, m, k).noalias() += dC * detail::cview(B.value, 0, k, n).transpose();
      }
      if (B.requires_grad) {
        detail::view(B.ensure_grad(), 0, k, n).noalias() += detail::cview(A.value, 0, m, k).transpose() * dC;
      }
    };
  }
  return out;
}

// Independent products over `batch` blocks. a: [batch*m, k].
// transpose_b: b is [batch*n, k] and block i computes A_i B_i^T.
// otherwise:   b is [batch*k, n] and block i computes A_i B_i.
template <typename T>
Tensor<T> batched_matmul(const Tensor<T>& a, const Tensor<T>& b, std::size_t batch, bool transpose_b) {
  detail::require_matrix("batched_matmul", a);
  detail::require_matrix("batched_matmul", b);
  if (batch == 0 || a.rows() % batch || b.rows() % batch) detail::shape_error("batched_matmul", a.shape(), b.shape());
  const std::size_t m = a.rows() / batch, k = a.cols();
  std::size_t n;
  if (transpose_b) {
    if (b.cols() != k) detail::shape_error("batched_matmul", a.shape(), b.shape());
    n = b.rows() / batch;
  } else {
    if (b.rows() / batch != k) detail::shape_error("batched_matmul", a.shape(), b.shape());
    n = b.cols();
  }
  auto out = make_result<T>({batch * m, n}, {a, b}, "batched_matmul");
  for (std::size_t i = 0; i < batch; ++i) {
    auto C = detail::view(out.values(), i * m * n, m, n);
    auto A = detail::cview(a.values(), i * m * k, m, k);
    if (transpose_b) {
      C.noalias() = A * detail::cview(b.values(), i * n * k, n, k).transpose();
    } else {
      C.noalias() = A * detail::cview(b.values(), i * k * n, k, n);
    }
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [batch, m, k, n, transpose_b](Node<T>& self) {
      auto& A = *self.parents[0];
      auto& B = *self.parents[1];
      for (std::size_t i = 0; i < batch; ++i) {
        auto dC = detail::cview(self.grad, i * m * n, m, n);
        auto Ai = detail::cview(A.value, i * m * k, m, k);
        if (transpose_b) {
          auto Bi = detail::cview(B.value, i * n * k, n, k);
          if (A.requires_grad) detail::view(A.ensure_grad(), i * m * k, m, k).noalias() += dC * Bi;
          if (B.requires_grad) detail::view(B.ensure_grad(), i * n * k, n, k).noalias() += dC.transpose() * Ai;
        } else {
          auto Bi = detail::cview(B.value, i * k * n, k, n);
          if (A.requires_grad) detail::view(A.ensure_grad(), i * m * k, m, k).noalias() += dC * Bi.transpose();
          if (B.requires_grad) detail::view(B.ensure_grad(), i * k * n, k, n).noalias() += Ai.transpose() * dC;
        }
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) detail::shape_error("add", a.shape(), b.shape());
  auto out = make_result<T>(a.shape(), {a, b}, "add");
  auto& o = out.values();
  const auto& x = a.values();
  const auto& y = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  if (out.requires_grad()) {
    out.node()->backward_fn = [](Node<T>& self) {
      for (auto& p : self.parents) {
        if (!p->requires_grad) continue;
        auto& g = p->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
    };
  }
  return out;
}

// x: [m, n], bias: n elements, added to every row.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  detail::require_matrix("add_bias", x);
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.numel() != n) detail::shape_error("add_bias", x.shape(), bias.shape());
  auto out = make_result<T>(x.shape(), {x, bias}, "add_bias");
  auto& o = out.values();
  const auto& xv = x.values();
  const auto& bv = bias.values();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) o[r * n + c] = xv[r * n + c] + bv[c];
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [m, n](Node<T>& self) {
      auto& X = *self.parents[0];
      auto& B = *self.parents[1];
      if (X.requires_grad) {
        auto& g = X.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
      if (B.requires_grad) {
        auto& g = B.ensure_grad();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < n; ++c) g[c] += self.grad[r * n + c];
        }
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  auto out = make_result<T>(a.shape(), {a}, "scale");
  auto& o = out.values();
  const auto& x = a.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * s;
  if (out.requires_grad()) {
    out.node()->backward_fn = [s](Node<T>& self) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
    };
  }
  return out;
}

// Elementwise product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) detail::shape_error("mul", a.shape(), b.shape());
  auto out = make_result<T>(a.shape(), {a, b}, "mul");
  auto& o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.values()[i] * b.values()[i];
  if (out.requires_grad()) {
    out.node()->backward_fn = [](Node<T>& self) {
      auto& A = *self.parents[0];
      auto& B = *self.parents[1];
      if (A.requires_grad) {
        auto& g = A.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * B.value[i];
      }
      if (B.requires_grad) {
        auto& g = B.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * A.value[i];
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  auto out = make_result<T>({}, {a}, "sum");
  T s = 0;
  for (T v : a.values()) s += v;
  out.values()[0] = s;
  if (out.requires_grad()) {
    out.node()->backward_fn = [](Node<T>& self) {
      auto& g = self.parents[0]->ensure_grad();
      for (auto& v : g) v += self.grad[0];
    };
  }
  return out;
}

enum class Activation { kGelu, kRelu };

inline std::string_view to_string(Activation a) { return a == Activation::kGelu ? "gelu" : "relu"; }

// GELU uses the exact erf form.
template <typename T>
Tensor<T> activate(const Tensor<T>& a, Activation kind) {
  auto out = make_result<T>(a.shape(), {a}, kind == Activation::kGelu ? "gelu" : "relu");
  auto& o = out.values();
  const auto& x = a.values();
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  if (kind == Activation::kGelu) {
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] * inv_sqrt2));
  } else {
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] > T(0) ? x[i] : T(0);
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [kind, inv_sqrt2](Node<T>& self) {
      auto& X = *self.parents[0];
      auto& g = X.ensure_grad();
      const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T x = X.value[i];
        T d;
        if (kind == Activation::kGelu) {
          d = T(0.5) * (T(1) + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
        } else {
          d = x > T(0) ? T(1) : T(0);
        }
        g[i] += self.grad[i] * d;
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) { return activate(a, Activation::kGelu); }
template <typename T>
Tensor<T> relu(const Tensor<T>& a) { return activate(a, Activation::kRelu); }

// Softmax over the last axis. -inf entries get probability exactly 0.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
  detail::require_matrix("softmax", a);
  const std::size_t m = a.rows(), n = a.cols();
  auto out = make_result<T>(a.shape(), {a}, "softmax");
  auto& o = out.values();
  const auto& x = a.values();
  for (std::size_t r = 0; r < m; ++r) {
    const T* xr = x.data() + r * n;
    T* yr = o.data() + r * n;
    const T mx = *std::max_element(xr, xr + n);
    T s = 0;
    for (std::size_t c = 0; c < n; ++c) {
      yr[c] = std::exp(xr[c] - mx);
      s += yr[c];
    }
    for (std::size_t c = 0; c < n; ++c) yr[c] /= s;
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [m, n](Node<T>& self) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t r = 0; r < m; ++r) {
        const T* y = self.value.data() + r * n;
        const T* dy = self.grad.data() + r * n;
        T dot = 0;
        for (std::size_t c = 0; c < n; ++c) dot += y[c] * dy[c];
        for (std::size_t c = 0; c < n; ++c) g[r * n + c] += y[c] * (dy[c] - dot);
      }
    };
  }
  return out;
}

// Per-row normalization to zero mean / unit variance, then gamma * x + beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
  detail::require_matrix("layer_norm", a);
  const std::size_t m = a.rows(), n = a.cols();
  if (gamma.numel() != n) detail::shape_error("layer_norm", a.shape(), gamma.shape());
  if (beta.numel() != n) detail::shape_error("layer_norm", a.shape(), beta.shape());
  auto out = make_result<T>(a.shape(), {a, gamma, beta}, "layer_norm");
  std::vector<T> xhat(m * n);
  std::vector<T> inv_std(m);
  const auto& x = a.values();
  auto& o = out.values();
  for (std::size_t r = 0; r < m; ++r) {
    const T* xr = x.data() + r * n;
    T mean = 0;
    for (std::size_t c = 0; c < n; ++c) mean += xr[c];
    mean /= static_cast<T>(n);
    T var = 0;
    for (std::size_t c = 0; c < n; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<T>(n);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat[r * n + c] = (xr[c] - mean) * inv_std[r];
      o[r * n + c] = gamma.values()[c] * xhat[r * n + c] + beta.values()[c];
    }
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
      auto& X = *self.parents[0];
      auto& G = *self.parents[1];
      auto& B = *self.parents[2];
      std::vector<T> dxhat(n);
      for (std::size_t r = 0; r < m; ++r) {
        const T* dy = self.grad.data() + r * n;
        const T* xh = xhat.data() + r * n;
        if (G.requires_grad) {
          auto& gg = G.ensure_grad();
          for (std::size_t c = 0; c < n; ++c) gg[c] += dy[c] * xh[c];
        }
        if (B.requires_grad) {
          auto& gb = B.ensure_grad();
          for (std::size_t c = 0; c < n; ++c) gb[c] += dy[c];
        }
        if (X.requires_grad) {
          T sum_d = 0, sum_dx = 0;
          for (std::size_t c = 0; c < n; ++c) {
            dxhat[c] = dy[c] * G.value[c];
            sum_d += dxhat[c];
            sum_dx += dxhat[c] * xh[c];
          }
          auto& gx = X.ensure_grad();
          const T k = inv_std[r] / static_cast<T>(n);
          for (std::size_t c = 0; c < n; ++c) {
            gx[r * n + c] += k * (static_cast<T>(n) * dxhat[c] - sum_d - xh[c] * sum_dx);
          }
        }
      }
    };
  }
  return out;
}

// Rows of `table` selected by `ids`.
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids) {
  detail::require_matrix("embedding", table);
  const std::size_t v = table.rows(), d = table.cols();
  auto out = make_result<T>({ids.size(), d}, {table}, "embedding");
  std::vector<std::int32_t> idx(ids.begin(), ids.end());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= v) {
      fail(ErrorCode::kInvalidArgument, "embedding: id " + std::to_string(idx[i]) + " outside table of " +
                                            std::to_string(v) + " rows");
    }
    std::copy_n(table.values().data() + static_cast<std::size_t>(idx[i]) * d, d, out.values().data() + i * d);
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [d, idx = std::move(idx)](Node<T>& self) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        T* dst = g.data() + static_cast<std::size_t>(idx[i]) * d;
        const T* src = self.grad.data() + i * d;
        for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
      }
    };
  }
  return out;
}

// [m, a] ++ [m, b] -> [m, a + b]
template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix("concat", a);
  detail::require_matrix("concat", b);
  if (a.rows() != b.rows()) detail::shape_error("concat", a.shape(), b.shape());
  const std::size_t m = a.rows(), na = a.cols(), nb = b.cols(), n = na + nb;
  auto out = make_result<T>({m, n}, {a, b}, "concat");
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(a.values().data() + r * na, na, out.values().data() + r * n);
    std::copy_n(b.values().data() + r * nb, nb, out.values().data() + r * n + na);
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [m, na, nb, n](Node<T>& self) {
      auto& A = *self.parents[0];
      auto& B = *self.parents[1];
      for (std::size_t r = 0; r < m; ++r) {
        if (A.requires_grad) {
          auto& g = A.ensure_grad();
          for (std::size_t c = 0; c < na; ++c) g[r * na + c] += self.grad[r * n + c];
        }
        if (B.requires_grad) {
          auto& g = B.ensure_grad();
          for (std::size_t c = 0; c < nb; ++c) g[r * nb + c] += self.grad[r * n + na + c];
        }
      }
    };
  }
  return out;
}

// Selects rows of a matrix; backward scatters into the selected rows.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> rows) {
  detail::require_matrix("gather_rows", x);
  const std::size_t n = x.cols();
  auto out = make_result<T>({rows.size(), n}, {x}, "gather_rows");
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= x.rows()) fail(ErrorCode::kInvalidArgument, "gather_rows: row index out of range");
    std::copy_n(x.values().data() + idx[i] * n, n, out.values().data() + i * n);
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [n, idx = std::move(idx)](Node<T>& self) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t c = 0; c < n; ++c) g[idx[i] * n + c] += self.grad[i * n + c];
      }
    };
  }
  return out;
}

// Inverted dropout. Identity when not training or rate == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, Rng* rng) {
  if (!training || rate <= 0.0) return x;
  if (!rng) fail(ErrorCode::kInvalidArgument, "dropout in training mode needs an rng");
  if (rate >= 1.0) fail(ErrorCode::kInvalidArgument, "dropout rate must be < 1");
  auto out = make_result<T>(x.shape(), {x}, "dropout");
  std::vector<T> mask(x.numel());
  const T keep_scale = T(1) / static_cast<T>(1.0 - rate);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng->bernoulli(rate) ? T(0) : keep_scale;
    out.values()[i] = x.values()[i] * mask[i];
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [mask = std::move(mask)](Node<T>& self) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
    };
  }
  return out;
}

// Adds a constant (non-differentiable) mask, e.g. -inf at padded keys.
template <typename T>
Tensor<T> mask_add(const Tensor<T>& x, std::span<const T> mask) {
  if (mask.size() != x.numel()) {
    fail(ErrorCode::kShapeMismatch, "mask_add: mask has " + std::to_string(mask.size()) +
                                        " elements for tensor of shape " + to_string(x.shape()));
  }
  auto out = make_result<T>(x.shape(), {x}, "mask_add");
  for (std::size_t i = 0; i < mask.size(); ++i) out.values()[i] = x.values()[i] + mask[i];
  if (out.requires_grad()) {
    out.node()->backward_fn = [](Node<T>& self) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    };
  }
  return out;
}

namespace detail {

// Index of element (row, col) of the [B*L, H*dh] layout inside the
// [B*H*L, dh] head-major layout.
struct HeadLayout {
  std::size_t batch, len, heads, head_dim;
  std::size_t packed(std::size_t row, std::size_t col) const {
    const std::size_t b = row / len, t = row % len, h = col / head_dim, j = col % head_dim;
    return ((b * heads + h) * len + t) * head_dim + j;
  }
};

}  // namespace detail

// [B*L, H*dh] -> [B*H*L, dh]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t batch, std::size_t len, std::size_t heads) {
  detail::require_matrix("split_heads", x);
  if (x.rows() != batch * len || heads == 0 || x.cols() % heads) {
    fail(ErrorCode::kShapeMismatch, "split_heads: shape " + to_string(x.shape()) + " does not fit batch " +
                                        std::to_string(batch) + " x len " + std::to_string(len) + " x heads " +
                                        std::to_string(heads));
  }
  const detail::HeadLayout lay{batch, len, heads, x.cols() / heads};
  const std::size_t d = x.cols();
  auto out = make_result<T>({batch * heads * len, lay.head_dim}, {x}, "split_heads");
  for (std::size_t r = 0; r < batch * len; ++r) {
    for (std::size_t c = 0; c < d; ++c) out.values()[lay.packed(r, c)] = x.values()[r * d + c];
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [lay, d](Node<T>& self) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t r = 0; r < lay.batch * lay.len; ++r) {
        for (std::size_t c = 0; c < d; ++c) g[r * d + c] += self.grad[lay.packed(r, c)];
      }
    };
  }
  return out;
}

// [B*H*L, dh] -> [B*L, H*dh]
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x, std::size_t batch, std::size_t len, std::size_t heads) {
  detail::require_matrix("merge_heads", x);
  if (x.rows() != batch * heads * len) {
    fail(ErrorCode::kShapeMismatch, "merge_heads: shape " + to_string(x.shape()) + " does not fit the batch layout");
  }
  const detail::HeadLayout lay{batch, len, heads, x.cols()};
  const std::size_t d = heads * x.cols();
  auto out = make_result<T>({batch * len, d}, {x}, "merge_heads");
  for (std::size_t r = 0; r < batch * len; ++r) {
    for (std::size_t c = 0; c < d; ++c) out.values()[r * d + c] = x.values()[lay.packed(r, c)];
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [lay, d](Node<T>& self) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t r = 0; r < lay.batch * lay.len; ++r) {
        for (std::size_t c = 0; c < d; ++c) g[lay.packed(r, c)] += self.grad[r * d + c];
      }
    };
  }
  return out;
}

// Mean negative log-softmax of the gold class over rows not ignored.
// `ignore` may be empty (nothing ignored) or hold one flag per row.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> gold,
                        std::span<const std::uint8_t> ignore = {}) {
  detail::require_matrix("cross_entropy", logits);
  const std::size_t m = logits.rows(), c = logits.cols();
  if (gold.size() != m || (!ignore.empty() && ignore.size() != m)) {
    fail(ErrorCode::kShapeMismatch, "cross_entropy: " + std::to_string(gold.size()) + " labels for " +
                                        std::to_string(m) + " rows");
  }
  std::vector<std::int32_t> labels(gold.begin(), gold.end());
  std::vector<std::uint8_t> skip(m, 0);
  if (!ignore.empty()) std::copy(ignore.begin(), ignore.end(), skip.begin());
  std::size_t count = 0;
  for (std::size_t r = 0; r < m; ++r) {
    if (skip[r]) continue;
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= c) {
      fail(ErrorCode::kInvalidArgument, "cross_entropy: label " + std::to_string(labels[r]) + " outside " +
                                            std::to_string(c) + " classes");
    }
    ++count;
  }
  if (count == 0) fail(ErrorCode::kInvalidArgument, "cross_entropy: every position is ignored");
  auto out = make_result<T>({}, {logits}, "cross_entropy");
  std::vector<T> probs(m * c, T(0));
  double total = 0;
  for (std::size_t r = 0; r < m; ++r) {
    if (skip[r]) continue;
    const T* x = logits.values().data() + r * c;
    const T mx = *std::max_element(x, x + c);
    T s = 0;
    for (std::size_t k = 0; k < c; ++k) {
      probs[r * c + k] = std::exp(x[k] - mx);
      s += probs[r * c + k];
    }
    for (std::size_t k = 0; k < c; ++k) probs[r * c + k] /= s;
    total += static_cast<double>(std::log(s) + mx - x[labels[r]]);
  }
  out.values()[0] = static_cast<T>(total / static_cast<double>(count));
  if (out.requires_grad()) {
    out.node()->backward_fn = [m, c, count, labels = std::move(labels), skip = std::move(skip),
                               probs = std::move(probs)](Node<T>& self) {
      auto& g = self.parents[0]->ensure_grad();
      const T k = self.grad[0] / static_cast<T>(count);
      for (std::size_t r = 0; r < m; ++r) {
        if (skip[r]) continue;
        for (std::size_t j = 0; j < c; ++j) g[r * c + j] += k * probs[r * c + j];
        g[r * c + static_cast<std::size_t>(labels[r])] -= k;
      }
    };
  }
  return out;
}

// Affine map x W + b.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  return add_bias(matmul(x, weight), bias);
}

}  // namespace spellforge::ad
