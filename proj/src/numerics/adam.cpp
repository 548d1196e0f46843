#include "clarifid/numerics/adam.hpp"

#include <algorithm>
#include <cmath>

#include "clarifid/errors.hpp"

namespace clarifid::numerics {

Adam::Adam(std::vector<Tensor> params, AdamOptions options) : Adam(std::move(params), {}, options) {}

Adam::Adam(std::vector<Tensor> params, std::vector<double> lr_scale, AdamOptions options)
    : params_(std::move(params)), options_(options), lr_scale_(std::move(lr_scale)) {
  if (lr_scale_.empty()) lr_scale_.assign(params_.size(), 1.0);
  if (lr_scale_.size() != params_.size()) throw ConfigError("Adam: one lr scale per parameter");
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
    acc_.emplace_back(p.size(), 0.0);
  }
}

void Adam::accumulate(double weight) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto g = params_[i].grad();
    if (g.empty()) continue;
    auto& acc = acc_[i];
    for (std::size_t j = 0; j < g.size(); ++j) acc[j] += weight * g[j];
    params_[i].zero_grad();
  }
}

void Adam::discard() {
  for (auto& acc : acc_) std::fill(acc.begin(), acc.end(), 0.0);
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto w = params_[i].mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    auto& g = acc_[i];
    const double rate = lr * lr_scale_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = options_.beta1 * m[j] + (1.0 - options_.beta1) * g[j];
      v[j] = options_.beta2 * v[j] + (1.0 - options_.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= rate * mhat / (std::sqrt(vhat) + options_.eps);
    }
    std::fill(g.begin(), g.end(), 0.0);
  }
}

}  // namespace clarifid::numerics
