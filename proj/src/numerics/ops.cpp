#include "clarifid/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "clarifid/errors.hpp"
#include "clarifid/numerics/kernels.hpp"

namespace clarifid::numerics {

using detail::TensorImpl;
using kernels::ConstMatrixMap;
using kernels::MatrixMap;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

TensorImpl* raw(const Tensor& t) { return t.impl().get(); }

bool wants_grad(const TensorImpl* t) { return t->requires_grad && !t->grad.empty(); }

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes differ, " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

std::size_t last_dim(const Tensor& t) { return t.shape().back(); }

template <typename F>
Tensor unary_elementwise(const Tensor& x, F&& value, const char* op,
                         detail::BackwardFn backward) {
  Buffer out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = value(in[i]);
  return make_result(x.shape(), std::move(out), {x}, std::move(backward), op);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions disagree, " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Buffer out(m * n);
  MatrixMap(out.data(), m, n).noalias() =
      ConstMatrixMap(a.data().data(), m, k) * ConstMatrixMap(b.data().data(), k, n);
  auto* pa = raw(a);
  auto* pb = raw(b);
  return make_result({m, n}, std::move(out), {a, b},
                     [pa, pb, m, k, n](TensorImpl& o) {
                       ConstMatrixMap g(o.grad.data(), m, n);
                       if (wants_grad(pa)) {
                         MatrixMap(pa->grad.data(), m, k).noalias() +=
                             g * ConstMatrixMap(pb->data.data(), k, n).transpose();
                       }
                       if (wants_grad(pb)) {
                         MatrixMap(pb->grad.data(), k, n).noalias() +=
                             ConstMatrixMap(pa->data.data(), m, k).transpose() * g;
                       }
                     },
                     "matmul");
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  require_rank(bias, 1, "linear");
  if (x.dim(1) != w.dim(0) || bias.dim(0) != w.dim(1)) {
    throw ShapeError("linear: incompatible shapes " + shape_string(x.shape()) + " x " +
                     shape_string(w.shape()) + " + " + shape_string(bias.shape()));
  }
  const auto m = x.dim(0), k = x.dim(1), n = w.dim(1);
  Buffer out(m * n);
  MatrixMap o(out.data(), m, n);
  o.noalias() = ConstMatrixMap(x.data().data(), m, k) * ConstMatrixMap(w.data().data(), k, n);
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), n);
  auto* px = raw(x);
  auto* pw = raw(w);
  auto* pb = raw(bias);
  return make_result({m, n}, std::move(out), {x, w, bias},
                     [px, pw, pb, m, k, n](TensorImpl& res) {
                       ConstMatrixMap g(res.grad.data(), m, n);
                       if (wants_grad(px)) {
                         MatrixMap(px->grad.data(), m, k).noalias() +=
                             g * ConstMatrixMap(pw->data.data(), k, n).transpose();
                       }
                       if (wants_grad(pw)) {
                         MatrixMap(pw->grad.data(), k, n).noalias() +=
                             ConstMatrixMap(px->data.data(), m, k).transpose() * g;
                       }
                       if (wants_grad(pb)) {
                         Eigen::Map<Eigen::RowVectorXd>(pb->grad.data(), n) += g.colwise().sum();
                       }
                     },
                     "linear");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Buffer out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto* pa = raw(a);
  auto* pb = raw(b);
  return make_result(a.shape(), std::move(out), {a, b},
                     [pa, pb](TensorImpl& o) {
                       for (auto* p : {pa, pb}) {
                         if (!wants_grad(p)) continue;
                         for (std::size_t i = 0; i < o.grad.size(); ++i) p->grad[i] += o.grad[i];
                       }
                     },
                     "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Buffer out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  auto* pa = raw(a);
  auto* pb = raw(b);
  return make_result(a.shape(), std::move(out), {a, b},
                     [pa, pb](TensorImpl& o) {
                       if (wants_grad(pa)) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
                       }
                       if (wants_grad(pb)) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) pb->grad[i] -= o.grad[i];
                       }
                     },
                     "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Buffer out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto* pa = raw(a);
  auto* pb = raw(b);
  return make_result(a.shape(), std::move(out), {a, b},
                     [pa, pb](TensorImpl& o) {
                       if (wants_grad(pa)) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i)
                           pa->grad[i] += o.grad[i] * pb->data[i];
                       }
                       if (wants_grad(pb)) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i)
                           pb->grad[i] += o.grad[i] * pa->data[i];
                       }
                     },
                     "mul");
}

Tensor scale(const Tensor& a, double factor) {
  auto* pa = raw(a);
  return unary_elementwise(
      a, [factor](double v) { return v * factor; }, "scale",
      [pa, factor](TensorImpl& o) {
        if (!wants_grad(pa)) return;
        for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += factor * o.grad[i];
      });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(bias, 1, "add_bias");
  const auto n = bias.dim(0);
  if (last_dim(x) != n) {
    throw ShapeError("add_bias: " + shape_string(x.shape()) + " + " + shape_string(bias.shape()));
  }
  Buffer out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.data()[i % n];
  auto* px = raw(x);
  auto* pb = raw(bias);
  return make_result(x.shape(), std::move(out), {x, bias},
                     [px, pb, n](TensorImpl& o) {
                       if (wants_grad(px)) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) px->grad[i] += o.grad[i];
                       }
                       if (wants_grad(pb)) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) pb->grad[i % n] += o.grad[i];
                       }
                     },
                     "add_bias");
}

Tensor add_tiled(const Tensor& x, const Tensor& block) {
  require_rank(x, 2, "add_tiled");
  require_rank(block, 2, "add_tiled");
  if (x.dim(1) != block.dim(1) || x.dim(0) % block.dim(0) != 0) {
    throw ShapeError("add_tiled: " + shape_string(x.shape()) + " + tiled " +
                     shape_string(block.shape()));
  }
  const auto bs = block.size();
  Buffer out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += block.data()[i % bs];
  auto* px = raw(x);
  auto* pb = raw(block);
  return make_result(x.shape(), std::move(out), {x, block},
                     [px, pb, bs](TensorImpl& o) {
                       if (wants_grad(px)) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) px->grad[i] += o.grad[i];
                       }
                       if (wants_grad(pb)) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) pb->grad[i % bs] += o.grad[i];
                       }
                     },
                     "add_tiled");
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  auto* px = raw(x);
  return make_result({1}, {total}, {x},
                     [px](TensorImpl& o) {
                       if (!wants_grad(px)) return;
                       for (double& g : px->grad) g += o.grad[0];
                     },
                     "sum");
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor exp(const Tensor& x) {
  auto* px = raw(x);
  return unary_elementwise(
      x, [](double v) { return std::exp(v); }, "exp",
      [px](TensorImpl& o) {
        if (!wants_grad(px)) return;
        for (std::size_t i = 0; i < o.grad.size(); ++i) px->grad[i] += o.grad[i] * o.data[i];
      });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  auto* px = raw(x);
  return unary_elementwise(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); }, "clamp",
      [px, lo, hi](TensorImpl& o) {
        if (!wants_grad(px)) return;
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
          const double v = px->data[i];
          if (v > lo && v < hi) px->grad[i] += o.grad[i];
        }
      });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "minimum");
  Buffer out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(a.data()[i], b.data()[i]);
  auto* pa = raw(a);
  auto* pb = raw(b);
  return make_result(a.shape(), std::move(out), {a, b},
                     [pa, pb](TensorImpl& o) {
                       for (std::size_t i = 0; i < o.grad.size(); ++i) {
                         const bool first = pa->data[i] <= pb->data[i];
                         auto* target = first ? pa : pb;
                         if (wants_grad(target)) target->grad[i] += o.grad[i];
                       }
                     },
                     "minimum");
}

Tensor gelu(const Tensor& x) {
  auto* px = raw(x);
  return unary_elementwise(
      x, [](double v) { return kernels::gelu(v); }, "gelu",
      [px](TensorImpl& o) {
        if (!wants_grad(px)) return;
        for (std::size_t i = 0; i < o.grad.size(); ++i)
          px->grad[i] += o.grad[i] * kernels::gelu_derivative(px->data[i]);
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank(gain, 1, "layer_norm");
  require_rank(bias, 1, "layer_norm");
  const auto d = last_dim(x);
  if (d < 2 || gain.dim(0) != d || bias.dim(0) != d) {
    throw ShapeError("layer_norm: " + shape_string(x.shape()) + " with gain " +
                     shape_string(gain.shape()) + " and bias " + shape_string(bias.shape()));
  }
  const auto rows = x.size() / d;
  Buffer out(x.size());
  Buffer xhat(x.size());
  Buffer inv_sigma(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    inv_sigma[r] = kernels::layer_norm_row(x.data().subspan(r * d, d), gain.data(), bias.data(), eps,
                                           std::span(out).subspan(r * d, d),
                                           std::span(xhat).subspan(r * d, d));
  }
  auto* px = raw(x);
  auto* pg = raw(gain);
  auto* pb = raw(bias);
  return make_result(
      x.shape(), std::move(out), {x, gain, bias},
      [px, pg, pb, d, rows, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](TensorImpl& o) {
        Buffer dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* g = o.grad.data() + r * d;
          const double* h = xhat.data() + r * d;
          if (wants_grad(pg))
            for (std::size_t j = 0; j < d; ++j) pg->grad[j] += g[j] * h[j];
          if (wants_grad(pb))
            for (std::size_t j = 0; j < d; ++j) pb->grad[j] += g[j];
          if (!wants_grad(px)) continue;
          double mean_dxhat = 0.0, mean_dxhat_h = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            dxhat[j] = g[j] * pg->data[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_h += dxhat[j] * h[j];
          }
          mean_dxhat /= static_cast<double>(d);
          mean_dxhat_h /= static_cast<double>(d);
          double* dx = px->grad.data() + r * d;
          for (std::size_t j = 0; j < d; ++j)
            dx[j] += inv_sigma[r] * (dxhat[j] - mean_dxhat - h[j] * mean_dxhat_h);
        }
      },
      "layer_norm");
}

namespace {

// Copies x with masked-out entries replaced by -inf; rejects rows with no
// unmasked entry.
Buffer apply_row_mask(const Tensor& x, const std::optional<Tensor>& mask,
                                   const char* op) {
  Buffer values(x.data().begin(), x.data().end());
  const auto n = last_dim(x);
  const auto rows = x.size() / n;
  if (mask) {
    require_same_shape(x, *mask, op);
    const auto m = mask->data();
    for (std::size_t r = 0; r < rows; ++r) {
      bool any = false;
      for (std::size_t j = 0; j < n; ++j) {
        if (m[r * n + j] == 0.0) {
          values[r * n + j] = kNegInf;
        } else {
          any = true;
        }
      }
      if (!any) {
        throw DegenerateRowError(std::string(op) + ": row " + std::to_string(r) +
                                 " has every entry masked out");
      }
    }
  }
  return values;
}

}  // namespace

Tensor softmax_rows(const Tensor& x, const std::optional<Tensor>& mask) {
  const auto n = last_dim(x);
  const auto rows = x.size() / n;
  auto out = apply_row_mask(x, mask, "softmax_rows");
  for (std::size_t r = 0; r < rows; ++r) kernels::softmax_inplace(std::span(out).subspan(r * n, n));
  auto* px = raw(x);
  return make_result(x.shape(), std::move(out), {x},
                     [px, n, rows](TensorImpl& o) {
                       if (!wants_grad(px)) return;
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* p = o.data.data() + r * n;
                         const double* g = o.grad.data() + r * n;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < n; ++j) dot += p[j] * g[j];
                         for (std::size_t j = 0; j < n; ++j) px->grad[r * n + j] += p[j] * (g[j] - dot);
                       }
                     },
                     "softmax_rows");
}

Tensor log_softmax_rows(const Tensor& x, const std::optional<Tensor>& mask) {
  const auto n = last_dim(x);
  const auto rows = x.size() / n;
  auto out = apply_row_mask(x, mask, "log_softmax_rows");
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data() + r * n;
    double mx = kNegInf;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, row[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (row[j] != kNegInf) total += std::exp(row[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j)
      if (row[j] != kNegInf) row[j] -= lse;
  }
  auto* px = raw(x);
  return make_result(x.shape(), std::move(out), {x},
                     [px, n, rows](TensorImpl& o) {
                       if (!wants_grad(px)) return;
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* y = o.data.data() + r * n;
                         const double* g = o.grad.data() + r * n;
                         double gsum = 0.0;
                         for (std::size_t j = 0; j < n; ++j)
                           if (y[j] != kNegInf) gsum += g[j];
                         for (std::size_t j = 0; j < n; ++j) {
                           if (y[j] == kNegInf) continue;
                           px->grad[r * n + j] += g[j] - std::exp(y[j]) * gsum;
                         }
                       }
                     },
                     "log_softmax_rows");
}

Tensor cross_entropy_logits(const Tensor& logits, std::span<const int> targets, int ignore_index) {
  require_rank(logits, 2, "cross_entropy_logits");
  const auto rows = logits.dim(0), vocab = logits.dim(1);
  if (targets.size() != rows) {
    throw ShapeError("cross_entropy_logits: " + std::to_string(targets.size()) + " targets for " +
                     shape_string(logits.shape()) + " logits");
  }
  Buffer probs(logits.data().begin(), logits.data().end());
  std::vector<int> tgt(targets.begin(), targets.end());
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (tgt[r] == ignore_index) continue;
    if (tgt[r] < 0 || static_cast<std::size_t>(tgt[r]) >= vocab) {
      throw ShapeError("cross_entropy_logits: target " + std::to_string(tgt[r]) +
                       " outside vocabulary of " + std::to_string(vocab));
    }
    auto row = std::span(probs).subspan(r * vocab, vocab);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    total += mx + std::log(z) - row[tgt[r]];
    kernels::softmax_inplace(row);
    ++count;
  }
  if (count == 0) throw EmptyLossError("cross_entropy_logits: every position is ignored");
  auto* pl = raw(logits);
  const double inv = 1.0 / static_cast<double>(count);
  return make_result({1}, {total * inv}, {logits},
                     [pl, rows, vocab, inv, ignore_index, probs = std::move(probs),
                      tgt = std::move(tgt)](TensorImpl& o) {
                       if (!wants_grad(pl)) return;
                       const double g = o.grad[0] * inv;
                       for (std::size_t r = 0; r < rows; ++r) {
                         if (tgt[r] == ignore_index) continue;
                         double* dst = pl->grad.data() + r * vocab;
                         const double* p = probs.data() + r * vocab;
                         for (std::size_t j = 0; j < vocab; ++j) dst[j] += g * p[j];
                         dst[tgt[r]] -= g;
                       }
                     },
                     "cross_entropy_logits");
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_rank(table, 2, "embedding");
  const auto vocab = table.dim(0), d = table.dim(1);
  std::vector<int> idx(ids.begin(), ids.end());
  Buffer out(idx.size() * d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= vocab) {
      throw ShapeError("embedding: id " + std::to_string(idx[i]) + " outside table of " +
                       std::to_string(vocab));
    }
    std::copy_n(table.data().begin() + idx[i] * d, d, out.begin() + i * d);
  }
  auto* pt = raw(table);
  const auto count = idx.size();
  return make_result({count, d}, std::move(out), {table},
                     [pt, d, idx = std::move(idx)](TensorImpl& o) {
                       if (!wants_grad(pt)) return;
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         double* dst = pt->grad.data() + idx[i] * d;
                         const double* g = o.grad.data() + i * d;
                         for (std::size_t j = 0; j < d; ++j) dst[j] += g[j];
                       }
                     },
                     "embedding");
}

Tensor gather_logsumexp(const Tensor& x, std::span<const std::vector<int>> sets) {
  require_rank(x, 2, "gather_logsumexp");
  const auto rows = x.dim(0), n = x.dim(1);
  if (sets.size() != rows) {
    throw ShapeError("gather_logsumexp: " + std::to_string(sets.size()) + " index sets for " +
                     shape_string(x.shape()));
  }
  std::vector<std::vector<int>> idx(sets.begin(), sets.end());
  Buffer out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (idx[r].empty()) throw ShapeError("gather_logsumexp: empty index set");
    const double* row = x.data().data() + r * n;
    double mx = kNegInf;
    for (int j : idx[r]) {
      if (j < 0 || static_cast<std::size_t>(j) >= n) throw ShapeError("gather_logsumexp: index out of range");
      mx = std::max(mx, row[j]);
    }
    if (idx[r].size() == 1 || mx == kNegInf) {
      out[r] = idx[r].size() == 1 ? row[idx[r][0]] : kNegInf;
      continue;
    }
    double total = 0.0;
    for (int j : idx[r]) total += std::exp(row[j] - mx);
    out[r] = mx + std::log(total);
  }
  auto* px = raw(x);
  return make_result({rows}, std::move(out), {x},
                     [px, n, idx = std::move(idx)](TensorImpl& o) {
                       if (!wants_grad(px)) return;
                       for (std::size_t r = 0; r < idx.size(); ++r) {
                         if (idx[r].size() == 1) {
                           px->grad[r * n + idx[r][0]] += o.grad[r];
                           continue;
                         }
                         if (o.data[r] == kNegInf) continue;
                         for (int j : idx[r]) {
                           px->grad[r * n + j] += o.grad[r] * std::exp(px->data[r * n + j] - o.data[r]);
                         }
                       }
                     },
                     "gather_logsumexp");
}

Tensor scatter_rows(const Tensor& x, std::span<const std::size_t> destinations, std::size_t rows) {
  require_rank(x, 2, "scatter_rows");
  const auto m = x.dim(0), n = x.dim(1);
  if (destinations.size() != m) {
    throw ShapeError("scatter_rows: " + std::to_string(destinations.size()) + " destinations for " +
                     shape_string(x.shape()));
  }
  std::vector<std::size_t> dest(destinations.begin(), destinations.end());
  Buffer out(rows * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (dest[i] >= rows) throw ShapeError("scatter_rows: destination out of range");
    std::copy_n(x.data().begin() + i * n, n, out.begin() + dest[i] * n);
  }
  auto* px = raw(x);
  return make_result({rows, n}, std::move(out), {x},
                     [px, n, dest = std::move(dest)](TensorImpl& o) {
                       if (!wants_grad(px)) return;
                       for (std::size_t i = 0; i < dest.size(); ++i) {
                         for (std::size_t j = 0; j < n; ++j) px->grad[i * n + j] += o.grad[dest[i] * n + j];
                       }
                     },
                     "scatter_rows");
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> sources) {
  require_rank(x, 2, "gather_rows");
  const auto m = x.dim(0), n = x.dim(1);
  std::vector<std::size_t> src(sources.begin(), sources.end());
  Buffer out(src.size() * n);
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i] >= m) throw ShapeError("gather_rows: source out of range");
    std::copy_n(x.data().begin() + src[i] * n, n, out.begin() + i * n);
  }
  auto* px = raw(x);
  const auto count = src.size();
  return make_result({count, n}, std::move(out), {x},
                     [px, n, src = std::move(src)](TensorImpl& o) {
                       if (!wants_grad(px)) return;
                       for (std::size_t i = 0; i < src.size(); ++i) {
                         for (std::size_t j = 0; j < n; ++j) px->grad[src[i] * n + j] += o.grad[i * n + j];
                       }
                     },
                     "gather_rows");
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  auto* px = raw(x);
  return make_result(std::move(shape), Buffer(x.data().begin(), x.data().end()), {x},
                     [px](TensorImpl& o) {
                       if (!wants_grad(px)) return;
                       for (std::size_t i = 0; i < o.grad.size(); ++i) px->grad[i] += o.grad[i];
                     },
                     "reshape");
}

}  // namespace clarifid::numerics
