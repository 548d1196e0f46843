#include <cmath>
#include <limits>
#include <string>

#include "clarifid/errors.hpp"
#include "clarifid/numerics/kernels.hpp"
#include "clarifid/numerics/ops.hpp"

namespace clarifid::numerics {

using detail::TensorImpl;
using kernels::ConstStridedMap;
using kernels::RowMatrix;
using kernels::StridedMap;

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionSpec& spec) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw ShapeError("attention: q, k, v must be rank 2");
  }
  const auto d = q.dim(1);
  const auto batch = spec.batch, heads = spec.heads;
  if (batch == 0 || heads == 0 || d % heads != 0 || k.dim(1) != d || v.shape() != k.shape() ||
      q.dim(0) % batch != 0 || k.dim(0) % batch != 0) {
    throw ShapeError("attention: q " + shape_string(q.shape()) + ", k " + shape_string(k.shape()) +
                     ", v " + shape_string(v.shape()) + " incompatible with batch " +
                     std::to_string(batch) + " and " + std::to_string(heads) + " heads");
  }
  const auto tq = q.dim(0) / batch;
  const auto tk = k.dim(0) / batch;
  if (spec.causal && tq != tk) throw ShapeError("attention: causal attention needs equal query/key lengths");
  Buffer key_mask;
  if (spec.key_mask) {
    if (spec.key_mask->shape() != Shape{batch, tk}) {
      throw ShapeError("attention: key mask " + shape_string(spec.key_mask->shape()) +
                       " does not match [" + std::to_string(batch) + "x" + std::to_string(tk) + "]");
    }
    key_mask.assign(spec.key_mask->data().begin(), spec.key_mask->data().end());
  }
  const auto dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool causal = spec.causal;

  // probs[(b·H + h)] is a tq×tk block.
  Buffer probs(batch * heads * tq * tk);
  Buffer out(batch * tq * d);
  const double* qd = q.data().data();
  const double* kd = k.data().data();
  const double* vd = v.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      ConstStridedMap qh(qd + b * tq * d + h * dh, tq, dh, Eigen::OuterStride<>(d));
      ConstStridedMap kh(kd + b * tk * d + h * dh, tk, dh, Eigen::OuterStride<>(d));
      ConstStridedMap vh(vd + b * tk * d + h * dh, tk, dh, Eigen::OuterStride<>(d));
      double* pblock = probs.data() + (b * heads + h) * tq * tk;
      kernels::MatrixMap p(pblock, tq, tk);
      p.noalias() = (qh * kh.transpose()) * scale;
      for (std::size_t i = 0; i < tq; ++i) {
        bool any = false;
        for (std::size_t j = 0; j < tk; ++j) {
          const bool blocked = (causal && j > i) || (!key_mask.empty() && key_mask[b * tk + j] == 0.0);
          if (blocked) {
            p(i, j) = -std::numeric_limits<double>::infinity();
          } else {
            any = true;
          }
        }
        if (!any) {
          throw DegenerateRowError("attention: query " + std::to_string(i) + " of batch row " +
                                   std::to_string(b) + " has no key to attend to");
        }
        kernels::softmax_inplace(std::span(pblock + i * tk, tk));
      }
      StridedMap oh(out.data() + b * tq * d + h * dh, tq, dh, Eigen::OuterStride<>(d));
      oh.noalias() = p * vh;
    }
  }

  auto* pq = q.impl().get();
  auto* pk = k.impl().get();
  auto* pv = v.impl().get();
  return make_result(
      {batch * tq, d}, std::move(out), {q, k, v},
      [pq, pk, pv, batch, heads, tq, tk, d, dh, scale, probs = std::move(probs)](TensorImpl& o) {
        const bool gq = pq->requires_grad && !pq->grad.empty();
        const bool gk = pk->requires_grad && !pk->grad.empty();
        const bool gv = pv->requires_grad && !pv->grad.empty();
        RowMatrix ds(tq, tk);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const auto qoff = b * tq * d + h * dh;
            const auto koff = b * tk * d + h * dh;
            kernels::ConstMatrixMap p(probs.data() + (b * heads + h) * tq * tk, tq, tk);
            ConstStridedMap dout(o.grad.data() + qoff, tq, dh, Eigen::OuterStride<>(d));
            if (gv) {
              StridedMap(pv->grad.data() + koff, tk, dh, Eigen::OuterStride<>(d)).noalias() +=
                  p.transpose() * dout;
            }
            if (!gq && !gk) continue;
            ConstStridedMap vh(pv->data.data() + koff, tk, dh, Eigen::OuterStride<>(d));
            ds.noalias() = dout * vh.transpose();
            for (std::size_t i = 0; i < tq; ++i) {
              double dot = 0.0;
              for (std::size_t j = 0; j < tk; ++j) dot += ds(i, j) * p(i, j);
              for (std::size_t j = 0; j < tk; ++j) ds(i, j) = p(i, j) * (ds(i, j) - dot) * scale;
            }
            if (gq) {
              ConstStridedMap kh(pk->data.data() + koff, tk, dh, Eigen::OuterStride<>(d));
              StridedMap(pq->grad.data() + qoff, tq, dh, Eigen::OuterStride<>(d)).noalias() += ds * kh;
            }
            if (gk) {
              ConstStridedMap qh(pq->data.data() + qoff, tq, dh, Eigen::OuterStride<>(d));
              StridedMap(pk->grad.data() + koff, tk, dh, Eigen::OuterStride<>(d)).noalias() +=
                  ds.transpose() * qh;
            }
          }
        }
      },
      "attention");
}

}  // namespace clarifid::numerics
