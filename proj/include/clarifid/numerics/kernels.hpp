#pragma once

// Value-only kernels shared by the differentiable ops and the graph-free
// incremental decoder.

#include <Eigen/Core>
#include <cmath>
#include <span>

namespace clarifid::numerics::kernels {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

inline constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluCubic = 0.044715;

inline double gelu(double x) {
  const double inner = kGeluScale * (x + kGeluCubic * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(inner));
}

inline double gelu_derivative(double x) {
  const double inner = kGeluScale * (x + kGeluCubic * x * x * x);
  const double t = std::tanh(inner);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
}

/// In-place normalization of one row; writes xhat and returns 1/sigma.
inline double layer_norm_row(std::span<const double> x, std::span<const double> gain,
                             std::span<const double> bias, double eps, std::span<double> out,
                             std::span<double> xhat) {
  const std::size_t n = x.size();
  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + eps);
  for (std::size_t j = 0; j < n; ++j) {
    const double h = (x[j] - mu) * inv;
    if (!xhat.empty()) xhat[j] = h;
    out[j] = gain[j] * h + bias[j];
  }
  return inv;
}

/// Softmax in place over entries; -inf entries become exactly 0.
inline void softmax_inplace(std::span<double> row) {
  double mx = -INFINITY;
  for (double v : row) mx = v > mx ? v : mx;
  double total = 0.0;
  for (double& v : row) {
    v = std::isinf(v) && v < 0 ? 0.0 : std::exp(v - mx);
    total += v;
  }
  for (double& v : row) v /= total;
}

}  // namespace clarifid::numerics::kernels
