/**
 *  Copyright (c) 2026 by Contributors
 * @file kgt/tensor.hpp
 * @brief Dense row-major tensors and a reverse-mode computation tape.
 *
 * The tape is templated on the scalar type: training runs in float, the
 * finite-difference gradient suites run the same code in double. All tape
 * values are 2-D (rows x cols); scalars are 1 x 1.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kgt/error.hpp"

namespace kgt::nn {

template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, T fill = T(0))
      : shape(std::move(dims)), values(element_count(shape), fill) {}
  Tensor(std::vector<std::size_t> dims, std::vector<T> data) : shape(std::move(dims)), values(std::move(data)) {
    if (values.size() != element_count(shape)) throw ShapeError("tensor data does not match its shape");
  }

  static std::size_t element_count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  /// Leading dimensions folded into rows; the last dimension is columns.
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

  T& operator()(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.values.assign(values.begin(), values.end());
    return out;
  }

  bool operator==(const Tensor&) const = default;
};

struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const { return id != std::numeric_limits<std::uint32_t>::max(); }
};

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
inline constexpr double kGeluA = 0.044715;

template <typename T>
T gelu_scalar(T x) {
  const T u = T(kGeluC) * (x + T(kGeluA) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(u));
}

template <typename T>
T gelu_grad_scalar(T x) {
  const T u = T(kGeluC) * (x + T(kGeluA) * x * x * x);
  const T t = std::tanh(u);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * T(kGeluC) * (T(1) + T(3 * kGeluA) * x * x);
}

/// log(sum(exp(x))) with max-shift; -inf entries contribute nothing.
template <typename T>
T log_sum_exp(std::span<const T> x) {
  T m = -std::numeric_limits<T>::infinity();
  for (T v : x) m = std::max(m, v);
  if (m == -std::numeric_limits<T>::infinity()) return m;
  T s = 0;
  for (T v : x) s += std::exp(v - m);
  return m + std::log(s);
}

/// Smoothed label distribution (1 - alpha) * onehot + alpha / classes.
template <typename T>
std::vector<T> smoothed_targets(std::size_t target, T alpha, std::size_t classes) {
  std::vector<T> y(classes, alpha / static_cast<T>(classes));
  y.at(target) += T(1) - alpha;
  return y;
}

template <typename T>
class Tape {
 public:
  struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> value;
    const T* external = nullptr;  // leaf view into caller-owned storage
    std::vector<T> grad;
    bool requires_grad = false;
    std::function<void(Tape&, const Node&)> backward;

    std::size_t size() const { return rows * cols; }
    const T* data() const { return external ? external : value.data(); }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return nodes_.size(); }
  std::size_t rows(Var v) const { return nodes_[v.id].rows; }
  std::size_t cols(Var v) const { return nodes_[v.id].cols; }
  std::span<const T> value(Var v) const { return {nodes_[v.id].data(), nodes_[v.id].size()}; }
  T scalar(Var v) const {
    if (nodes_[v.id].size() != 1) throw ShapeError("scalar(): tensor is not 1x1");
    return value(v)[0];
  }
  /// Empty until backward() reaches the node.
  std::span<const T> grad(Var v) const { return nodes_[v.id].grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  Var constant(std::size_t rows, std::size_t cols, std::vector<T> values) {
    if (values.size() != rows * cols) throw ShapeError("constant: data does not match shape");
    Node n;
    n.rows = rows;
    n.cols = cols;
    n.value = std::move(values);
    return push(std::move(n));
  }
  Var constant(const Tensor<T>& t) { return constant(t.rows(), t.cols(), t.values); }
  Var zeros(std::size_t rows, std::size_t cols) { return constant(rows, cols, std::vector<T>(rows * cols, T(0))); }

  /// Trainable leaf referencing `t` without copying; `t` must outlive the tape.
  Var leaf(const Tensor<T>& t) {
    Node n;
    n.rows = t.rows();
    n.cols = t.cols();
    n.external = t.values.data();
    n.requires_grad = true;
    return push(std::move(n));
  }

  void backward(Var loss) {
    Node& top = nodes_[loss.id];
    if (top.size() != 1) throw ShapeError("backward() needs a scalar loss");
    if (!top.requires_grad) return;
    grad_buffer(loss.id)[0] += T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      const Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
      n.backward(*this, n);
    }
  }

  // ---- linear algebra -------------------------------------------------

  /// a [m x k] * b [k x n].
  Var matmul(Var a, Var b) {
    const auto m = rows(a), k = cols(a), n = cols(b);
    if (rows(b) != k) throw ShapeError(shape_msg("matmul", a, b));
    std::vector<T> out(m * n, T(0));
    gemm_nn(value(a).data(), value(b).data(), out.data(), m, k, n);
    return record(m, n, std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Node& self) {
      if (auto* ga = t.grad_if(a)) gemm_nt(self.grad.data(), t.value(b).data(), ga, m, n, k);
      if (auto* gb = t.grad_if(b)) gemm_tn(t.value(a).data(), self.grad.data(), gb, k, m, n);
    });
  }

  /// a [m x k] * b^T with b [n x k].
  Var matmul_nt(Var a, Var b) {
    const auto m = rows(a), k = cols(a), n = rows(b);
    if (cols(b) != k) throw ShapeError(shape_msg("matmul_nt", a, b));
    std::vector<T> out(m * n, T(0));
    gemm_nt(value(a).data(), value(b).data(), out.data(), m, k, n);
    return record(m, n, std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Node& self) {
      if (auto* ga = t.grad_if(a)) gemm_nn(self.grad.data(), t.value(b).data(), ga, m, n, k);
      if (auto* gb = t.grad_if(b)) gemm_tn(self.grad.data(), t.value(a).data(), gb, n, m, k);
    });
  }

  Var add(Var a, Var b) {
    if (rows(a) != rows(b) || cols(a) != cols(b)) throw ShapeError(shape_msg("add", a, b));
    const auto va = value(a), vb = value(b);
    std::vector<T> out(va.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
    return record(rows(a), cols(a), std::move(out), {a, b}, [a, b](Tape& t, const Node& self) {
      for (Var v : {a, b})
        if (auto* g = t.grad_if(v))
          for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
  }

  /// Broadcasts a length-n bias over every row of a [m x n].
  Var add_row(Var a, Var bias) {
    const auto m = rows(a), n = cols(a);
    if (nodes_[bias.id].size() != n) throw ShapeError(shape_msg("add_row", a, bias));
    const auto va = value(a), vb = value(bias);
    std::vector<T> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] = va[i * n + j] + vb[j];
    return record(m, n, std::move(out), {a, bias}, [a, bias, m, n](Tape& t, const Node& self) {
      if (auto* g = t.grad_if(a))
        for (std::size_t i = 0; i < m * n; ++i) g[i] += self.grad[i];
      if (auto* g = t.grad_if(bias))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    });
  }

  Var scale(Var a, T s) {
    const auto va = value(a);
    std::vector<T> out(va.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * s;
    return record(rows(a), cols(a), std::move(out), {a}, [a, s](Tape& t, const Node& self) {
      if (auto* g = t.grad_if(a))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * s;
    });
  }

  /// Multiplies row i of x [m x n] by w[i], w [m x 1].
  Var row_scale(Var x, Var w) {
    const auto m = rows(x), n = cols(x);
    if (nodes_[w.id].size() != m) throw ShapeError(shape_msg("row_scale", x, w));
    const auto vx = value(x), vw = value(w);
    std::vector<T> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] = vx[i * n + j] * vw[i];
    return record(m, n, std::move(out), {x, w}, [x, w, m, n](Tape& t, const Node& self) {
      const auto vx = t.value(x), vw = t.value(w);
      if (auto* g = t.grad_if(x))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i * n + j] * vw[i];
      if (auto* g = t.grad_if(w))
        for (std::size_t i = 0; i < m; ++i) {
          T s = 0;
          for (std::size_t j = 0; j < n; ++j) s += self.grad[i * n + j] * vx[i * n + j];
          g[i] += s;
        }
    });
  }

  Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const auto m = rows(parts[0]);
    std::size_t n = 0;
    for (Var p : parts) {
      if (rows(p) != m) throw ShapeError("concat_cols: row mismatch");
      n += cols(p);
    }
    std::vector<T> out(m * n);
    std::size_t off = 0;
    for (Var p : parts) {
      const auto vp = value(p);
      const auto c = cols(p);
      for (std::size_t i = 0; i < m; ++i) std::copy_n(vp.data() + i * c, c, out.data() + i * n + off);
      off += c;
    }
    std::vector<Var> ps(parts.begin(), parts.end());
    return record(m, n, std::move(out), ps, [ps, m, n](Tape& t, const Node& self) {
      std::size_t off = 0;
      for (Var p : ps) {
        const auto c = t.cols(p);
        if (auto* g = t.grad_if(p))
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i * n + off + j];
        off += c;
      }
    });
  }

  /// Rows `index` of table [V x n] -> [k x n].
  Var gather_rows(Var table, std::vector<std::uint32_t> index) {
    const auto v = rows(table), n = cols(table);
    for (auto i : index)
      if (i >= v) throw IntegrityError("gather_rows: index " + std::to_string(i) + " out of range");
    const auto vt = value(table);
    std::vector<T> out(index.size() * n);
    for (std::size_t r = 0; r < index.size(); ++r) std::copy_n(vt.data() + index[r] * n, n, out.data() + r * n);
    const auto k = index.size();
    return record(k, n, std::move(out), {table}, [table, idx = std::move(index), n](Tape& t, const Node& self) {
      if (auto* g = t.grad_if(table))
        for (std::size_t r = 0; r < idx.size(); ++r)
          for (std::size_t j = 0; j < n; ++j) g[idx[r] * n + j] += self.grad[r * n + j];
    });
  }

  /// out [out_rows x n] with out[index[r]] += src[r].
  Var scatter_rows(Var src, std::vector<std::uint32_t> index, std::size_t out_rows) {
    const auto k = rows(src), n = cols(src);
    if (index.size() != k) throw ShapeError("scatter_rows: index length mismatch");
    for (auto i : index)
      if (i >= out_rows) throw IntegrityError("scatter_rows: index out of range");
    const auto vs = value(src);
    std::vector<T> out(out_rows * n, T(0));
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t j = 0; j < n; ++j) out[index[r] * n + j] += vs[r * n + j];
    return record(out_rows, n, std::move(out), {src}, [src, idx = std::move(index), n](Tape& t, const Node& self) {
      if (auto* g = t.grad_if(src))
        for (std::size_t r = 0; r < idx.size(); ++r)
          for (std::size_t j = 0; j < n; ++j) g[r * n + j] += self.grad[idx[r] * n + j];
    });
  }

  /// Column `col` of x at `row_index` -> [k x 1].
  Var pick_column(Var x, std::size_t col, std::vector<std::uint32_t> row_index) {
    const auto m = rows(x), n = cols(x);
    if (col >= n) throw ShapeError("pick_column: column out of range");
    const auto vx = value(x);
    std::vector<T> out(row_index.size());
    for (std::size_t r = 0; r < row_index.size(); ++r) {
      if (row_index[r] >= m) throw ShapeError("pick_column: row out of range");
      out[r] = vx[row_index[r] * n + col];
    }
    const auto k = row_index.size();
    return record(k, 1, std::move(out), {x}, [x, col, n, idx = std::move(row_index)](Tape& t, const Node& self) {
      if (auto* g = t.grad_if(x))
        for (std::size_t r = 0; r < idx.size(); ++r) g[idx[r] * n + col] += self.grad[r];
    });
  }

  Var sum(Var a) {
    const auto va = value(a);
    T s = 0;
    for (T v : va) s += v;
    return record(1, 1, {s}, {a}, [a](Tape& t, const Node& self) {
      if (auto* g = t.grad_if(a)) {
        const auto n = t.nodes_[a.id].size();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
      }
    });
  }

  // ---- nonlinearities -------------------------------------------------

  Var gelu(Var a) {
    const auto va = value(a);
    std::vector<T> out(va.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_scalar(va[i]);
    return record(rows(a), cols(a), std::move(out), {a}, [a](Tape& t, const Node& self) {
      if (auto* g = t.grad_if(a)) {
        const auto va = t.value(a);
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * gelu_grad_scalar(va[i]);
      }
    });
  }

  /// Normalizes each row to zero mean / unit variance, then gain * . + bias.
  Var layer_norm(Var x, Var gain, Var bias, T eps = T(1e-5)) {
    const auto m = rows(x), n = cols(x);
    if (n == 0) throw ShapeError("layer_norm: empty normalization dimension");
    if (nodes_[gain.id].size() != n || nodes_[bias.id].size() != n) throw ShapeError("layer_norm: affine size");
    const auto vx = value(x), vg = value(gain), vb = value(bias);
    std::vector<T> out(m * n), xhat(m * n), inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
      T mean = 0;
      for (std::size_t j = 0; j < n; ++j) mean += vx[i * n + j];
      mean /= static_cast<T>(n);
      T var = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const T d = vx[i * n + j] - mean;
        var += d * d;
      }
      var /= static_cast<T>(n);
      inv_std[i] = T(1) / std::sqrt(var + eps);
      for (std::size_t j = 0; j < n; ++j) {
        xhat[i * n + j] = (vx[i * n + j] - mean) * inv_std[i];
        out[i * n + j] = xhat[i * n + j] * vg[j] + vb[j];
      }
    }
    return record(m, n, std::move(out), {x, gain, bias},
                  [x, gain, bias, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Node& self) {
                    const auto vg = t.value(gain);
                    if (auto* g = t.grad_if(gain))
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j] * xhat[i * n + j];
                    if (auto* g = t.grad_if(bias))
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
                    if (auto* g = t.grad_if(x))
                      for (std::size_t i = 0; i < m; ++i) {
                        T mean_d = 0, mean_dx = 0;
                        for (std::size_t j = 0; j < n; ++j) {
                          const T d = self.grad[i * n + j] * vg[j];
                          mean_d += d;
                          mean_dx += d * xhat[i * n + j];
                        }
                        mean_d /= static_cast<T>(n);
                        mean_dx /= static_cast<T>(n);
                        for (std::size_t j = 0; j < n; ++j) {
                          const T d = self.grad[i * n + j] * vg[j];
                          g[i * n + j] += inv_std[i] * (d - mean_d - xhat[i * n + j] * mean_dx);
                        }
                      }
                  });
  }

  /// Inverted dropout; identity when not training or p == 0.
  template <typename Generator>
  Var dropout(Var x, double p, Generator& rng, bool training) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must lie in [0, 1)");
    if (!training || p == 0.0) return x;
    const auto vx = value(x);
    const T keep_scale = T(1) / static_cast<T>(1.0 - p);
    std::bernoulli_distribution keep(1.0 - p);
    std::vector<T> mask(vx.size());
    std::vector<T> out(vx.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      mask[i] = keep(rng) ? keep_scale : T(0);
      out[i] = vx[i] * mask[i];
    }
    return record(rows(x), cols(x), std::move(out), {x}, [x, mask = std::move(mask)](Tape& t, const Node& self) {
      if (auto* g = t.grad_if(x))
        for (std::size_t i = 0; i < mask.size(); ++i) g[i] += self.grad[i] * mask[i];
    });
  }

  /// Row-wise softmax restricted to entries with mask != 0; masked entries
  /// are exactly 0. Throws NumericError on a fully masked row.
  Var masked_softmax(Var logits, std::span<const std::uint8_t> mask) {
    const auto m = rows(logits), n = cols(logits);
    if (mask.size() != m * n) throw ShapeError("masked_softmax: mask shape mismatch");
    const auto vx = value(logits);
    std::vector<T> out(m * n, T(0));
    for (std::size_t i = 0; i < m; ++i) {
      T mx = -std::numeric_limits<T>::infinity();
      bool any = false;
      for (std::size_t j = 0; j < n; ++j)
        if (mask[i * n + j]) {
          mx = std::max(mx, vx[i * n + j]);
          any = true;
        }
      if (!any) throw NumericError("masked_softmax: row " + std::to_string(i) + " is fully masked");
      T s = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (mask[i * n + j]) s += (out[i * n + j] = std::exp(vx[i * n + j] - mx));
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= s;
    }
    return record(m, n, std::move(out), {logits}, [logits, m, n](Tape& t, const Node& self) {
      if (auto* g = t.grad_if(logits)) {
        const T* y = self.data();
        for (std::size_t i = 0; i < m; ++i) {
          T dot = 0;
          for (std::size_t j = 0; j < n; ++j) dot += y[i * n + j] * self.grad[i * n + j];
          for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[i * n + j] * (self.grad[i * n + j] - dot);
        }
      }
    });
  }

  /// Sum over rows of -sum_c y_ls(c) log softmax(logits)(c), with
  /// y_ls = (1 - alpha) onehot(target) + alpha / C.
  Var cross_entropy_smoothed(Var logits, std::vector<std::uint32_t> targets, T alpha) {
    const auto m = rows(logits), c = cols(logits);
    if (!(alpha >= T(0) && alpha < T(1))) throw ConfigError("label smoothing alpha must lie in [0, 1)");
    if (targets.size() != m) throw ShapeError("cross_entropy_smoothed: one target per row");
    const auto vx = value(logits);
    T loss = 0;
    std::vector<T> lse(m);
    for (std::size_t i = 0; i < m; ++i) {
      if (targets[i] >= c) throw IntegrityError("cross_entropy_smoothed: target out of range");
      const std::span<const T> row(vx.data() + i * c, c);
      lse[i] = log_sum_exp(row);
      T sum_logp = 0;
      for (T v : row) sum_logp += v - lse[i];
      loss += -(T(1) - alpha) * (row[targets[i]] - lse[i]) - (alpha / static_cast<T>(c)) * sum_logp;
    }
    return record(1, 1, {loss}, {logits},
                  [logits, m, c, alpha, targets = std::move(targets), lse = std::move(lse)](Tape& t, const Node& self) {
                    if (auto* g = t.grad_if(logits)) {
                      const auto vx = t.value(logits);
                      const T g0 = self.grad[0];
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < c; ++j) {
                          const T p = std::exp(vx[i * c + j] - lse[i]);
                          const T y = alpha / static_cast<T>(c) + (j == targets[i] ? T(1) - alpha : T(0));
                          g[i * c + j] += g0 * (p - y);
                        }
                    }
                  });
  }

  /// Mean over answers a of -log(exp(s_a) / (exp(s_a) + sum_{e not in A} exp(s_e)))
  /// for a single logit row; the other answers' logits are ignored per term.
  Var answer_set_nll(Var logits, std::vector<std::uint32_t> answers) {
    const auto c = cols(logits);
    if (rows(logits) != 1) throw ShapeError("answer_set_nll: expects a single logit row");
    if (answers.empty()) throw ConfigError("answer_set_nll: empty answer set");
    std::vector<std::uint8_t> is_answer(c, 0);
    for (auto a : answers) {
      if (a >= c) throw IntegrityError("answer_set_nll: answer out of range");
      is_answer[a] = 1;
    }
    std::sort(answers.begin(), answers.end());
    answers.erase(std::unique(answers.begin(), answers.end()), answers.end());
    const auto s = value(logits);
    constexpr T kNegInf = -std::numeric_limits<T>::infinity();
    T neg_max = kNegInf;
    for (std::size_t e = 0; e < c; ++e)
      if (!is_answer[e]) neg_max = std::max(neg_max, s[e]);
    T neg_sum = 0;  // sum over non-answers of exp(s_e - neg_max)
    if (neg_max != kNegInf)
      for (std::size_t e = 0; e < c; ++e)
        if (!is_answer[e]) neg_sum += std::exp(s[e] - neg_max);
    std::vector<T> shift(answers.size()), z(answers.size());
    T loss = 0;
    for (std::size_t k = 0; k < answers.size(); ++k) {
      const T sa = s[answers[k]];
      shift[k] = std::max(sa, neg_max);
      z[k] = std::exp(sa - shift[k]) + (neg_max == kNegInf ? T(0) : neg_sum * std::exp(neg_max - shift[k]));
      loss += std::log(z[k]) - (sa - shift[k]);
    }
    const T count = static_cast<T>(answers.size());
    loss /= count;
    return record(1, 1, {loss}, {logits},
                  [logits, c, count, answers = std::move(answers), is_answer = std::move(is_answer),
                   shift = std::move(shift), z = std::move(z)](Tape& t, const Node& self) {
                    if (auto* g = t.grad_if(logits)) {
                      const auto s = t.value(logits);
                      const T g0 = self.grad[0] / count;
                      for (std::size_t k = 0; k < answers.size(); ++k) {
                        const T inv_z = T(1) / z[k];
                        g[answers[k]] += g0 * (std::exp(s[answers[k]] - shift[k]) * inv_z - T(1));
                        for (std::size_t e = 0; e < c; ++e)
                          if (!is_answer[e]) g[e] += g0 * std::exp(s[e] - shift[k]) * inv_z;
                      }
                    }
                  });
  }

 private:
  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  template <typename Fn>
  Var record(std::size_t r, std::size_t c, std::vector<T> value, std::initializer_list<Var> inputs, Fn&& fn) {
    return record(r, c, std::move(value), std::vector<Var>(inputs), std::forward<Fn>(fn));
  }

  template <typename Fn>
  Var record(std::size_t r, std::size_t c, std::vector<T> value, const std::vector<Var>& inputs, Fn&& fn) {
    for (T v : value)
      if (!std::isfinite(v)) throw NumericError("non-finite value produced on the tape");
    Node n;
    n.rows = r;
    n.cols = c;
    n.value = std::move(value);
    for (Var in : inputs) n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
    if (n.requires_grad) n.backward = std::forward<Fn>(fn);
    return push(std::move(n));
  }

  T* grad_buffer(std::uint32_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.size(), T(0));
    return n.grad.data();
  }

  T* grad_if(Var v) { return nodes_[v.id].requires_grad ? grad_buffer(v.id) : nullptr; }

  std::string shape_msg(const char* op, Var a, Var b) const {
    return std::string(op) + ": incompatible shapes [" + std::to_string(rows(a)) + "x" + std::to_string(cols(a)) +
           "] and [" + std::to_string(rows(b)) + "x" + std::to_string(cols(b)) + "]";
  }

  // c[m x n] += a[m x k] * b[k x n]
  static void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const T aip = a[i * k + p];
        const T* brow = b + p * n;
        T* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
  }
  // c[m x n] += a[m x k] * b^T, b [n x k]
  static void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        T s = 0;
        const T* arow = a + i * k;
        const T* brow = b + j * k;
        for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
        c[i * n + j] += s;
      }
  }
  // c[m x n] += a^T * b, a [k x m], b [k x n]
  static void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t i = 0; i < m; ++i) {
        const T api = a[p * m + i];
        const T* brow = b + p * n;
        T* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
      }
  }

  std::vector<Node> nodes_;
};

}  // namespace kgt::nn
