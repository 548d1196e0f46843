#pragma once

#include <vector>

#include "clarifid/numerics/tensor.hpp"

namespace clarifid::numerics {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Plain Adam over a fixed parameter list.
///
/// Gradients are collected with accumulate() after each backward pass and
/// consumed by step(), so several micro-batches can feed one update.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamOptions options = {});
  /// `lr_scale[i]` multiplies the step size of parameter i.
  Adam(std::vector<Tensor> params, std::vector<double> lr_scale, AdamOptions options = {});

  /// Adds each parameter's current grad (if any) to the accumulation buffer
  /// and zeroes the grad.
  void accumulate(double weight = 1.0);
  /// Drops the accumulated gradient without updating.
  void discard();
  /// Applies one update with the accumulated gradient and clears it.
  void step(double lr);

  std::size_t steps_taken() const { return t_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::vector<double> lr_scale_;
  std::vector<std::vector<double>> m_, v_, acc_;
  std::size_t t_ = 0;
};

}  // namespace clarifid::numerics
