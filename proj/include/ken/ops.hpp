#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "ken/errors.hpp"
#include "ken/rng.hpp"
#include "ken/tape.hpp"
#include "ken/tensor.hpp"

namespace ken {

namespace detail {

inline void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) {
    std::string site = TraceScope::current();
    throw NumericError(std::string(op) + " produced a non-finite value" +
                       (site.empty() ? "" : " at site '" + site + "'"));
  }
}

// Records a node when a tape is listening. Output requires_grad is inherited
// from the inputs; the backward closure is kept only when gradients can flow.
template <typename F>
inline void record_op(const char* op, std::initializer_list<Tensor> inputs, Tensor& out,
                      F&& backward_fn) {
  Tape* tape = active_tape();
  if (!tape) return;
  bool needs = false;
  for (const Tensor& in : inputs) needs = needs || in.requires_grad();
  if (needs) out.set_requires_grad(true);
  if (!needs && !tape->record_all) return;

  Tape::Node node;
  node.op = op;
  node.site = TraceScope::current();
  node.inputs.reserve(inputs.size());
  for (const Tensor& in : inputs) node.inputs.push_back(in.impl());
  node.output = out.impl();
  if (needs) node.backward = std::function<void()>(std::forward<F>(backward_fn));
  tape->record(std::move(node));
}

// C[p x r] += A[p x q] * B[q x r], k ascending per output element.
inline void gemm_acc(const double* a, const double* b, double* c, int p, int q, int r) {
  for (int i = 0; i < p; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * q;
    double* crow = c + static_cast<std::size_t>(i) * r;
    for (int k = 0; k < q; ++k) {
      const double av = arow[k];
      const double* brow = b + static_cast<std::size_t>(k) * r;
      for (int j = 0; j < r; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[p x r] += A[p x q] * B^T where B is [r x q].
inline void gemm_bt_acc(const double* a, const double* b, double* c, int p, int q, int r) {
  for (int i = 0; i < p; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * q;
    double* crow = c + static_cast<std::size_t>(i) * r;
    for (int j = 0; j < r; ++j) {
      const double* brow = b + static_cast<std::size_t>(j) * q;
      double acc = 0.0;
      for (int k = 0; k < q; ++k) acc += arow[k] * brow[k];
      crow[j] += acc;
    }
  }
}

// C[q x r] += A^T * B where A is [p x q], B is [p x r].
inline void gemm_at_acc(const double* a, const double* b, double* c, int p, int q, int r) {
  for (int i = 0; i < p; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * q;
    const double* brow = b + static_cast<std::size_t>(i) * r;
    for (int k = 0; k < q; ++k) {
      const double av = arow[k];
      double* crow = c + static_cast<std::size_t>(k) * r;
      for (int j = 0; j < r; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

// Matrix product. Rank-1 operands are treated as a row (lhs) or column (rhs)
// vector and the result collapses back to rank 1.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const int p = a.rank() == 2 ? a.dim(0) : 1;
  const int qa = a.rank() == 2 ? a.dim(1) : a.dim(0);
  const int qb = b.rank() == 2 ? b.dim(0) : b.dim(0);
  const int r = b.rank() == 2 ? b.dim(1) : 1;
  if (qa != qb) {
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const int q = qa;

  Shape out_shape;
  if (a.rank() == 2 && b.rank() == 2) {
    out_shape = {p, r};
  } else if (a.rank() == 1 && b.rank() == 2) {
    out_shape = {r};
  } else if (a.rank() == 2 && b.rank() == 1) {
    out_shape = {p};
  } else {
    throw ShapeError("matmul: at least one operand must be rank 2, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }

  Tensor out(out_shape);
  detail::gemm_acc(a.data().data(), b.data().data(), out.data().data(), p, q, r);
  detail::check_finite(out, "matmul");

  detail::record_op("matmul", {a, b}, out, [a, b, out, p, q, r]() {
    const double* g = out.impl()->grad.data();
    if (a.requires_grad()) {
      a.impl()->ensure_grad();
      detail::gemm_bt_acc(g, b.data().data(), a.impl()->grad.data(), p, r, q);
    }
    if (b.requires_grad()) {
      b.impl()->ensure_grad();
      detail::gemm_at_acc(a.data().data(), g, b.impl()->grad.data(), p, q, r);
    }
  });
  return out;
}

inline Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose expects rank 2, got " + shape_str(a.shape()));
  const int p = a.dim(0), q = a.dim(1);
  Tensor out({q, p});
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < q; ++j) out.at(j, i) = a.at(i, j);

  detail::record_op("transpose", {a}, out, [a, out, p, q]() {
    const auto& g = out.impl()->grad;
    if (!a.requires_grad()) return;
    a.impl()->ensure_grad();
    auto& ga = a.impl()->grad;
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < q; ++j) ga[static_cast<std::size_t>(i) * q + j] += g[static_cast<std::size_t>(j) * p + i];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out.at(static_cast<int>(i)) = a.at(static_cast<int>(i)) + b.at(static_cast<int>(i));
  detail::check_finite(out, "add");

  detail::record_op("add", {a, b}, out, [a, b, out]() {
    const auto& g = out.impl()->grad;
    for (const Tensor* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      t->impl()->ensure_grad();
      auto& gt = t->impl()->grad;
      for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
    }
  });
  return out;
}

// Matrix plus a row vector broadcast over rows.
inline Tensor add_bias(const Tensor& m, const Tensor& bias) {
  if (m.rank() == 1) return add(m, bias);
  if (bias.rank() != 1 || bias.dim(0) != m.dim(1)) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                     shape_str(m.shape()));
  }
  const int p = m.dim(0), q = m.dim(1);
  Tensor out({p, q});
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < q; ++j) out.at(i, j) = m.at(i, j) + bias.at(j);
  detail::check_finite(out, "add_bias");

  detail::record_op("add_bias", {m, bias}, out, [m, bias, out, p, q]() {
    const auto& g = out.impl()->grad;
    if (m.requires_grad()) {
      m.impl()->ensure_grad();
      auto& gm = m.impl()->grad;
      for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
    }
    if (bias.requires_grad()) {
      bias.impl()->ensure_grad();
      auto& gb = bias.impl()->grad;
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < q; ++j) gb[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(i) * q + j];
    }
  });
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out.at(static_cast<int>(i)) = a.at(static_cast<int>(i)) * b.at(static_cast<int>(i));
  detail::check_finite(out, "mul");

  detail::record_op("mul", {a, b}, out, [a, b, out]() {
    const auto& g = out.impl()->grad;
    if (a.requires_grad()) {
      a.impl()->ensure_grad();
      auto& ga = a.impl()->grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.at(static_cast<int>(i));
    }
    if (b.requires_grad()) {
      b.impl()->ensure_grad();
      auto& gb = b.impl()->grad;
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.at(static_cast<int>(i));
    }
  });
  return out;
}

// Multiply by a runtime scalar. s == 0 writes exact +0.0 so a fully silenced
// branch is bit-independent of its input.
inline Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  if (s != 0.0) {
    for (std::int64_t i = 0; i < a.size(); ++i) out.at(static_cast<int>(i)) = s * a.at(static_cast<int>(i));
  }
  detail::check_finite(out, "scale");

  detail::record_op("scale", {a}, out, [a, out, s]() {
    if (!a.requires_grad() || s == 0.0) return;
    const auto& g = out.impl()->grad;
    a.impl()->ensure_grad();
    auto& ga = a.impl()->grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Nonlinearities and normalization

inline Tensor gelu(const Tensor& a) {
  Tensor out(a.shape());
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double x = a.at(static_cast<int>(i));
    out.at(static_cast<int>(i)) = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
  }
  detail::check_finite(out, "gelu");

  detail::record_op("gelu", {a}, out, [a, out, inv_sqrt2]() {
    if (!a.requires_grad()) return;
    const auto& g = out.impl()->grad;
    a.impl()->ensure_grad();
    auto& ga = a.impl()->grad;
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = a.at(static_cast<int>(i));
      const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
      const double pdf = std::exp(-0.5 * x * x) * inv_sqrt2pi;
      ga[i] += g[i] * (cdf + x * pdf);
    }
  });
  return out;
}

inline Tensor tanh_op(const Tensor& a) {
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out.at(static_cast<int>(i)) = std::tanh(a.at(static_cast<int>(i)));
  detail::check_finite(out, "tanh");

  detail::record_op("tanh", {a}, out, [a, out]() {
    if (!a.requires_grad()) return;
    const auto& g = out.impl()->grad;
    a.impl()->ensure_grad();
    auto& ga = a.impl()->grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = out.at(static_cast<int>(i));
      ga[i] += g[i] * (1.0 - y * y);
    }
  });
  return out;
}

inline Tensor sigmoid(const Tensor& a) {
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double x = a.at(static_cast<int>(i));
    if (x >= 0.0) {
      out.at(static_cast<int>(i)) = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      out.at(static_cast<int>(i)) = e / (1.0 + e);
    }
  }
  detail::check_finite(out, "sigmoid");

  detail::record_op("sigmoid", {a}, out, [a, out]() {
    if (!a.requires_grad()) return;
    const auto& g = out.impl()->grad;
    a.impl()->ensure_grad();
    auto& ga = a.impl()->grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = out.at(static_cast<int>(i));
      ga[i] += g[i] * y * (1.0 - y);
    }
  });
  return out;
}

// Row-wise softmax with per-row max subtraction. Rank-1 input is one row.
inline Tensor softmax_rows(const Tensor& a) {
  const int rows = a.rank() == 2 ? a.dim(0) : 1;
  const int cols = a.rank() == 2 ? a.dim(1) : a.dim(0);
  Tensor out(a.shape());
  for (int i = 0; i < rows; ++i) {
    const double* x = a.data().data() + static_cast<std::size_t>(i) * cols;
    double* y = out.data().data() + static_cast<std::size_t>(i) * cols;
    double mx = x[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < cols; ++j) y[j] *= inv;
  }
  detail::check_finite(out, "softmax_rows");

  detail::record_op("softmax_rows", {a}, out, [a, out, rows, cols]() {
    if (!a.requires_grad()) return;
    const auto& g = out.impl()->grad;
    a.impl()->ensure_grad();
    auto& ga = a.impl()->grad;
    for (int i = 0; i < rows; ++i) {
      const double* y = out.data().data() + static_cast<std::size_t>(i) * cols;
      const double* gy = g.data() + static_cast<std::size_t>(i) * cols;
      double dot = 0.0;
      for (int j = 0; j < cols; ++j) dot += gy[j] * y[j];
      double* gx = ga.data() + static_cast<std::size_t>(i) * cols;
      for (int j = 0; j < cols; ++j) gx[j] += y[j] * (gy[j] - dot);
    }
  });
  return out;
}

inline constexpr double kLayerNormEps = 1e-5;

// Per-row normalization to zero mean / unit variance (population variance,
// eps-guarded), then affine gain/bias.
inline Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                         double eps = kLayerNormEps) {
  const int rows = a.rank() == 2 ? a.dim(0) : 1;
  const int cols = a.rank() == 2 ? a.dim(1) : a.dim(0);
  if (gain.rank() != 1 || gain.dim(0) != cols || bias.rank() != 1 || bias.dim(0) != cols) {
    throw ShapeError("layer_norm: affine shapes " + shape_str(gain.shape()) + "/" +
                     shape_str(bias.shape()) + " do not match " + shape_str(a.shape()));
  }
  Tensor out(a.shape());
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  std::vector<double> normalized(static_cast<std::size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i) {
    const double* x = a.data().data() + static_cast<std::size_t>(i) * cols;
    double mean = 0.0;
    for (int j = 0; j < cols; ++j) mean += x[j];
    mean /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= cols;
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = inv;
    double* xhat = normalized.data() + static_cast<std::size_t>(i) * cols;
    double* y = out.data().data() + static_cast<std::size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) {
      xhat[j] = (x[j] - mean) * inv;
      y[j] = gain.at(j) * xhat[j] + bias.at(j);
    }
  }
  detail::check_finite(out, "layer_norm");

  detail::record_op("layer_norm", {a, gain, bias}, out,
                    [a, gain, bias, out, rows, cols, inv_std = std::move(inv_std),
                     normalized = std::move(normalized)]() {
    const auto& g = out.impl()->grad;
    for (int i = 0; i < rows; ++i) {
      const double* gy = g.data() + static_cast<std::size_t>(i) * cols;
      const double* xhat = normalized.data() + static_cast<std::size_t>(i) * cols;
      if (gain.requires_grad()) {
        gain.impl()->ensure_grad();
        auto& gg = gain.impl()->grad;
        for (int j = 0; j < cols; ++j) gg[static_cast<std::size_t>(j)] += gy[j] * xhat[j];
      }
      if (bias.requires_grad()) {
        bias.impl()->ensure_grad();
        auto& gb = bias.impl()->grad;
        for (int j = 0; j < cols; ++j) gb[static_cast<std::size_t>(j)] += gy[j];
      }
      if (a.requires_grad()) {
        a.impl()->ensure_grad();
        auto& ga = a.impl()->grad;
        double mean_t = 0.0, mean_tx = 0.0;
        for (int j = 0; j < cols; ++j) {
          const double t = gain.at(j) * gy[j];
          mean_t += t;
          mean_tx += t * xhat[j];
        }
        mean_t /= cols;
        mean_tx /= cols;
        double* gx = ga.data() + static_cast<std::size_t>(i) * cols;
        const double inv = inv_std[static_cast<std::size_t>(i)];
        for (int j = 0; j < cols; ++j) {
          const double t = gain.at(j) * gy[j];
          gx[j] += inv * (t - mean_t - xhat[j] * mean_tx);
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Shape plumbing

// Mean over rows; pools a sequence [len x d] to a single d-vector.
inline Tensor mean_rows(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("mean_rows expects rank 2, got " + shape_str(a.shape()));
  const int p = a.dim(0), q = a.dim(1);
  Tensor out({q});
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < q; ++j) out.at(j) += a.at(i, j);
  for (int j = 0; j < q; ++j) out.at(j) /= p;
  detail::check_finite(out, "mean_rows");

  detail::record_op("mean_rows", {a}, out, [a, out, p, q]() {
    if (!a.requires_grad()) return;
    const auto& g = out.impl()->grad;
    a.impl()->ensure_grad();
    auto& ga = a.impl()->grad;
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < q; ++j) ga[static_cast<std::size_t>(i) * q + j] += g[static_cast<std::size_t>(j)] / p;
  });
  return out;
}

namespace detail {

template <typename Getter>
inline Tensor concat_impl(const char* op, const std::vector<Tensor>& parts, Shape out_shape,
                          Getter offset_of) {
  Tensor out(std::move(out_shape));
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    for (std::size_t i = 0; i < src.size(); ++i) out.data()[offset_of(k, i)] = src[i];
  }
  check_finite(out, op);

  Tape* tape = active_tape();
  if (!tape) return out;
  bool needs = false;
  for (const Tensor& t : parts) needs = needs || t.requires_grad();
  if (needs) out.set_requires_grad(true);
  if (!needs && !tape->record_all) return out;

  Tape::Node node;
  node.op = op;
  node.site = TraceScope::current();
  for (const Tensor& t : parts) node.inputs.push_back(t.impl());
  node.output = out.impl();
  if (needs) {
    node.backward = [parts, out, offset_of]() {
      const auto& g = out.impl()->grad;
      for (std::size_t k = 0; k < parts.size(); ++k) {
        if (!parts[k].requires_grad()) continue;
        parts[k].impl()->ensure_grad();
        auto& gp = parts[k].impl()->grad;
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset_of(k, i)];
      }
    };
  }
  tape->record(std::move(node));
  return out;
}

}  // namespace detail

// Concatenate rank-1 tensors into one longer vector.
inline Tensor concat_vec(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_vec: empty input list");
  int total = 0;
  std::vector<std::size_t> offsets;
  for (const Tensor& t : parts) {
    if (t.rank() != 1) throw ShapeError("concat_vec expects rank-1 parts, got " + shape_str(t.shape()));
    offsets.push_back(static_cast<std::size_t>(total));
    total += t.dim(0);
  }
  return detail::concat_impl("concat_vec", parts, {total},
                             [offsets](std::size_t k, std::size_t i) { return offsets[k] + i; });
}

// Concatenate rank-2 tensors with equal row counts along columns.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: empty input list");
  const int rows = parts[0].dim(0);
  int total_cols = 0;
  std::vector<int> col_offsets, col_widths;
  for (const Tensor& t : parts) {
    if (t.rank() != 2 || t.dim(0) != rows) {
      throw ShapeError("concat_cols: incompatible part shape " + shape_str(t.shape()));
    }
    col_offsets.push_back(total_cols);
    col_widths.push_back(t.dim(1));
    total_cols += t.dim(1);
  }
  return detail::concat_impl(
      "concat_cols", parts, {rows, total_cols},
      [col_offsets, col_widths, total_cols](std::size_t k, std::size_t i) {
        const std::size_t r = i / col_widths[k];
        const std::size_t c = i % col_widths[k];
        return r * total_cols + col_offsets[k] + c;
      });
}

// Stack rank-1 tensors of equal length as the rows of a matrix.
inline Tensor stack_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("stack_rows: empty input list");
  const int q = parts[0].dim(0);
  for (const Tensor& t : parts) {
    if (t.rank() != 1 || t.dim(0) != q) {
      throw ShapeError("stack_rows: incompatible part shape " + shape_str(t.shape()));
    }
  }
  const std::size_t width = static_cast<std::size_t>(q);
  return detail::concat_impl("stack_rows", parts, {static_cast<int>(parts.size()), q},
                             [width](std::size_t k, std::size_t i) { return k * width + i; });
}

inline Tensor slice_cols(const Tensor& a, int start, int len) {
  if (a.rank() != 2) throw ShapeError("slice_cols expects rank 2, got " + shape_str(a.shape()));
  if (start < 0 || len <= 0 || start + len > a.dim(1)) {
    throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of " + shape_str(a.shape()));
  }
  const int p = a.dim(0), q = a.dim(1);
  Tensor out({p, len});
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < len; ++j) out.at(i, j) = a.at(i, start + j);

  detail::record_op("slice_cols", {a}, out, [a, out, p, q, start, len]() {
    if (!a.requires_grad()) return;
    const auto& g = out.impl()->grad;
    a.impl()->ensure_grad();
    auto& ga = a.impl()->grad;
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < len; ++j)
        ga[static_cast<std::size_t>(i) * q + start + j] += g[static_cast<std::size_t>(i) * len + j];
  });
  return out;
}

inline Tensor slice_vec(const Tensor& a, int start, int len) {
  if (a.rank() != 1) throw ShapeError("slice_vec expects rank 1, got " + shape_str(a.shape()));
  if (start < 0 || len <= 0 || start + len > a.dim(0)) {
    throw ShapeError("slice_vec: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of " + shape_str(a.shape()));
  }
  Tensor out({len});
  for (int j = 0; j < len; ++j) out.at(j) = a.at(start + j);

  detail::record_op("slice_vec", {a}, out, [a, out, start, len]() {
    if (!a.requires_grad()) return;
    const auto& g = out.impl()->grad;
    a.impl()->ensure_grad();
    auto& ga = a.impl()->grad;
    for (int j = 0; j < len; ++j) ga[static_cast<std::size_t>(start + j)] += g[static_cast<std::size_t>(j)];
  });
  return out;
}

// Extract one row of a matrix as a vector.
inline Tensor row(const Tensor& a, int r) {
  if (a.rank() != 2) throw ShapeError("row expects rank 2, got " + shape_str(a.shape()));
  if (r < 0 || r >= a.dim(0)) {
    throw ShapeError("row: index " + std::to_string(r) + " out of " + shape_str(a.shape()));
  }
  const int q = a.dim(1);
  Tensor out({q});
  for (int j = 0; j < q; ++j) out.at(j) = a.at(r, j);

  detail::record_op("row", {a}, out, [a, out, r, q]() {
    if (!a.requires_grad()) return;
    const auto& g = out.impl()->grad;
    a.impl()->ensure_grad();
    auto& ga = a.impl()->grad;
    for (int j = 0; j < q; ++j) ga[static_cast<std::size_t>(r) * q + j] += g[static_cast<std::size_t>(j)];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Reductions and combinations

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) s += a.at(static_cast<int>(i));
  Tensor out = Tensor::scalar(s);
  detail::check_finite(out, "sum");

  detail::record_op("sum", {a}, out, [a, out]() {
    if (!a.requires_grad()) return;
    const double g = out.impl()->grad[0];
    a.impl()->ensure_grad();
    auto& ga = a.impl()->grad;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
  return out;
}

// Elementwise mean of same-shape tensors.
inline Tensor average(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("average: empty input list");
  for (const Tensor& t : parts) {
    if (t.shape() != parts[0].shape()) {
      throw ShapeError("average: shape mismatch: " + shape_str(t.shape()) + " vs " +
                       shape_str(parts[0].shape()));
    }
  }
  Tensor out(parts[0].shape());
  for (const Tensor& t : parts)
    for (std::int64_t i = 0; i < t.size(); ++i) out.at(static_cast<int>(i)) += t.at(static_cast<int>(i));
  const double inv = 1.0 / static_cast<double>(parts.size());
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(static_cast<int>(i)) *= inv;
  detail::check_finite(out, "average");

  Tape* tape = active_tape();
  if (!tape) return out;
  bool needs = false;
  for (const Tensor& t : parts) needs = needs || t.requires_grad();
  if (needs) out.set_requires_grad(true);
  if (!needs && !tape->record_all) return out;

  Tape::Node node;
  node.op = "average";
  node.site = TraceScope::current();
  for (const Tensor& t : parts) node.inputs.push_back(t.impl());
  node.output = out.impl();
  if (needs) {
    node.backward = [parts, out, inv]() {
      const auto& g = out.impl()->grad;
      for (const Tensor& t : parts) {
        if (!t.requires_grad()) continue;
        t.impl()->ensure_grad();
        auto& gt = t.impl()->grad;
        for (std::size_t i = 0; i < g.size(); ++i) gt[i] += inv * g[i];
      }
    };
  }
  tape->record(std::move(node));
  return out;
}

// Convex-style combination F = sum_i w_i * item_i over rank-1 items.
inline Tensor weighted_sum(const Tensor& weights, const std::vector<Tensor>& items) {
  if (weights.rank() != 1 || static_cast<std::size_t>(weights.dim(0)) != items.size()) {
    throw ShapeError("weighted_sum: weight shape " + shape_str(weights.shape()) + " does not match " +
                     std::to_string(items.size()) + " items");
  }
  const int q = items[0].dim(0);
  for (const Tensor& t : items) {
    if (t.rank() != 1 || t.dim(0) != q) {
      throw ShapeError("weighted_sum: item shape mismatch: " + shape_str(t.shape()));
    }
  }
  Tensor out({q});
  for (std::size_t k = 0; k < items.size(); ++k) {
    const double w = weights.at(static_cast<int>(k));
    for (int j = 0; j < q; ++j) out.at(j) += w * items[k].at(j);
  }
  detail::check_finite(out, "weighted_sum");

  Tape* tape = active_tape();
  if (!tape) return out;
  bool needs = weights.requires_grad();
  for (const Tensor& t : items) needs = needs || t.requires_grad();
  if (needs) out.set_requires_grad(true);
  if (!needs && !tape->record_all) return out;

  Tape::Node node;
  node.op = "weighted_sum";
  node.site = TraceScope::current();
  node.inputs.push_back(weights.impl());
  for (const Tensor& t : items) node.inputs.push_back(t.impl());
  node.output = out.impl();
  if (needs) {
    node.backward = [weights, items, out, q]() {
      const auto& g = out.impl()->grad;
      for (std::size_t k = 0; k < items.size(); ++k) {
        if (items[k].requires_grad()) {
          items[k].impl()->ensure_grad();
          auto& gi = items[k].impl()->grad;
          const double w = weights.at(static_cast<int>(k));
          for (int j = 0; j < q; ++j) gi[static_cast<std::size_t>(j)] += w * g[static_cast<std::size_t>(j)];
        }
        if (weights.requires_grad()) {
          weights.impl()->ensure_grad();
          double acc = 0.0;
          for (int j = 0; j < q; ++j) acc += items[k].at(j) * g[static_cast<std::size_t>(j)];
          weights.impl()->grad[k] += acc;
        }
      }
    };
  }
  tape->record(std::move(node));
  return out;
}

// ---------------------------------------------------------------------------
// Losses

// Mean over the batch of -log softmax(logits)[label], computed via
// log-sum-exp so saturated predictions stay finite.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const int b = logits.rank() == 2 ? logits.dim(0) : 1;
  const int c = logits.rank() == 2 ? logits.dim(1) : logits.dim(0);
  if (static_cast<std::size_t>(b) != labels.size()) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(b) + " logit rows");
  }
  for (int y : labels) {
    if (y < 0 || y >= c) {
      throw DataError(DataError::Kind::bad_label,
                      "cross_entropy: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(c) + ")");
    }
  }
  double total = 0.0;
  for (int i = 0; i < b; ++i) {
    const double* x = logits.data().data() + static_cast<std::size_t>(i) * c;
    double mx = x[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (int j = 0; j < c; ++j) sum += std::exp(x[j] - mx);
    total += mx + std::log(sum) - x[labels[static_cast<std::size_t>(i)]];
  }
  Tensor out = Tensor::scalar(total / b);
  detail::check_finite(out, "cross_entropy");

  detail::record_op("cross_entropy", {logits}, out, [logits, out, labels, b, c]() {
    if (!logits.requires_grad()) return;
    const double g = out.impl()->grad[0];
    logits.impl()->ensure_grad();
    auto& gl = logits.impl()->grad;
    for (int i = 0; i < b; ++i) {
      const double* x = logits.data().data() + static_cast<std::size_t>(i) * c;
      double mx = x[0];
      for (int j = 1; j < c; ++j) mx = std::max(mx, x[j]);
      double sum = 0.0;
      for (int j = 0; j < c; ++j) sum += std::exp(x[j] - mx);
      for (int j = 0; j < c; ++j) {
        const double p = std::exp(x[j] - mx) / sum;
        const double target = (j == labels[static_cast<std::size_t>(i)]) ? 1.0 : 0.0;
        gl[static_cast<std::size_t>(i) * c + j] += g * (p - target) / b;
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Regularization

// Inverted dropout; identity when not training or rate == 0. Mask draws come
// from the explicit stream, one uniform per element in index order.
inline Tensor dropout(const Tensor& a, double rate, RngStream& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return a;

  std::vector<double> mask(static_cast<std::size_t>(a.size()));
  const double keep_scale = 1.0 / (1.0 - rate);
  for (auto& m : mask) m = (rng.next_unit() >= rate) ? keep_scale : 0.0;

  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out.at(static_cast<int>(i)) = a.at(static_cast<int>(i)) * mask[static_cast<std::size_t>(i)];
  detail::check_finite(out, "dropout");

  detail::record_op("dropout", {a}, out, [a, out, mask = std::move(mask)]() {
    if (!a.requires_grad()) return;
    const auto& g = out.impl()->grad;
    a.impl()->ensure_grad();
    auto& ga = a.impl()->grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Non-differentiable helpers

// Softmax over a rank-1 logit vector, computed off the graph. For reporting
// probabilities; gradients go through cross_entropy on the logits instead.
inline Tensor softmax_raw(const Tensor& logits) {
  Tensor out(logits.shape());
  double mx = logits.at(0);
  for (int i = 1; i < static_cast<int>(logits.size()); ++i) mx = std::max(mx, logits.at(i));
  double denom = 0.0;
  for (int i = 0; i < static_cast<int>(logits.size()); ++i) {
    out.at(i) = std::exp(logits.at(i) - mx);
    denom += out.at(i);
  }
  for (int i = 0; i < static_cast<int>(logits.size()); ++i) out.at(i) /= denom;
  return out;
}

inline double dot_raw(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) s += a.at(static_cast<int>(i)) * b.at(static_cast<int>(i));
  return s;
}

inline double norm_raw(const Tensor& a) { return std::sqrt(dot_raw(a, a)); }

inline double cosine_raw(const Tensor& a, const Tensor& b) {
  return dot_raw(a, b) / (norm_raw(a) * norm_raw(b));
}

}  // namespace ken
