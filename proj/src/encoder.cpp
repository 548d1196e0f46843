#include "clarifid/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clarifid/errors.hpp"
#include "clarifid/numerics/ops.hpp"

namespace clarifid {

namespace ops = numerics;
using numerics::Shape;

namespace {

Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> values(numerics::shape_size(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::from(std::move(shape), std::move(values), true);
}

}  // namespace

ViewEncoder ViewEncoder::init(std::size_t feature_dim, std::size_t d_model, std::mt19937_64& rng) {
  ViewEncoder e;
  e.w1 = normal_tensor({feature_dim, d_model}, 1.0 / std::sqrt(static_cast<double>(feature_dim)), rng);
  e.b1 = Tensor::zeros({d_model}, true);
  e.w2 = normal_tensor({d_model, d_model}, 1.0 / std::sqrt(static_cast<double>(d_model)), rng);
  e.b2 = Tensor::zeros({d_model}, true);
  return e;
}

NamedTensors ViewEncoder::named_parameters(const std::string& prefix) const {
  return {{prefix + "w1", w1}, {prefix + "b1", b1}, {prefix + "w2", w2}, {prefix + "b2", b2}};
}

ViewEncoder ViewEncoder::clone() const { return {w1.clone(), b1.clone(), w2.clone(), b2.clone()}; }

Tensor encode_views(const ViewEncoder& encoder, std::span<const FeatureGrid* const> views) {
  if (views.empty()) throw ShapeError("encode_views: no views");
  const auto n = views.front()->tokens;
  const auto din = encoder.feature_dim();
  std::vector<double> flat;
  flat.reserve(views.size() * n * din);
  for (const auto* v : views) {
    if (v->tokens != n || v->dim != din || v->values.size() != n * din) {
      throw ShapeError("encode_views: view grid " + std::to_string(v->tokens) + "x" + std::to_string(v->dim) +
                       " does not match " + std::to_string(n) + "x" + std::to_string(din));
    }
    flat.insert(flat.end(), v->values.begin(), v->values.end());
  }
  const auto x = Tensor::from({views.size() * n, din}, std::move(flat));
  const auto h = ops::gelu(ops::linear(x, encoder.w1, encoder.b1));
  const auto f = ops::linear(h, encoder.w2, encoder.b2);
  return ops::reshape(f, {views.size(), n, encoder.d_model()});
}

PackedStudyBatch pack_views(const Tensor& features, std::span<const std::size_t> counts) {
  if (features.rank() != 3) throw ShapeError("pack_views: features must be [|I| x N x d]");
  if (counts.empty()) throw ConsistencyError("pack_views: empty count vector");
  const auto images = features.dim(0), n = features.dim(1), d = features.dim(2);
  const auto total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  if (total != images || std::find(counts.begin(), counts.end(), 0u) != counts.end()) {
    throw ConsistencyError("pack_views: counts sum to " + std::to_string(total) + " but " +
                           std::to_string(images) + " images were encoded");
  }
  const auto max_views = *std::max_element(counts.begin(), counts.end());
  const auto m = max_views * n;
  const auto b = counts.size();
  std::vector<std::size_t> dest;
  dest.reserve(images * n);
  std::vector<double> mask(b * m, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t t = 0; t < counts[i] * n; ++t) {
      dest.push_back(i * m + t);
      mask[i * m + t] = 1.0;
    }
  }
  const auto rows = ops::reshape(features, {images * n, d});
  PackedStudyBatch packed;
  packed.s_hat = ops::reshape(ops::scatter_rows(rows, dest, b * m), {b, m, d});
  packed.mask = Tensor::from({b, m}, std::move(mask));
  packed.counts.assign(counts.begin(), counts.end());
  packed.tokens_per_view = n;
  return packed;
}

std::vector<Tensor> unpack_views(const PackedStudyBatch& batch) {
  const auto m = batch.max_tokens(), d = batch.d_model();
  const auto rows = ops::reshape(batch.s_hat, {batch.batch() * m, d});
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < batch.batch(); ++i) {
    std::vector<std::size_t> src(batch.counts[i] * batch.tokens_per_view);
    std::iota(src.begin(), src.end(), i * m);
    out.push_back(ops::gather_rows(rows, src));
  }
  return out;
}

PackedStudyBatch encode_studies(const ViewEncoder& encoder, std::span<const StudyRecord* const> studies,
                                double noise_sigma, std::mt19937_64* rng) {
  std::vector<std::size_t> counts;
  std::vector<FeatureGrid> noisy;
  std::vector<const FeatureGrid*> views;
  const bool add_noise = noise_sigma > 0.0 && rng != nullptr;
  for (const auto* s : studies) {
    counts.push_back(s->views.size());
    for (const auto& v : s->views) {
      if (add_noise) noisy.push_back(v);
      else views.push_back(&v);
    }
  }
  if (add_noise) {
    std::normal_distribution<double> dist(0.0, noise_sigma);
    for (auto& g : noisy) {
      for (auto& x : g.values) x += dist(*rng);
      views.push_back(&g);
    }
  }
  return pack_views(encode_views(encoder, views), counts);
}

PackedStudyBatch slice_batch(const PackedStudyBatch& batch, std::size_t first, std::size_t count) {
  if (count == 0 || first + count > batch.batch()) throw ShapeError("slice_batch: range outside batch");
  const auto m = batch.max_tokens(), d = batch.d_model();
  const auto rows = ops::reshape(batch.s_hat, {batch.batch() * m, d});
  std::vector<std::size_t> src(count * m);
  std::iota(src.begin(), src.end(), first * m);
  PackedStudyBatch out;
  out.s_hat = ops::reshape(ops::gather_rows(rows, src), {count, m, d});
  const auto mask = batch.mask.data();
  out.mask = Tensor::from({count, m}, std::vector<double>(mask.begin() + static_cast<std::ptrdiff_t>(first * m),
                                                          mask.begin() + static_cast<std::ptrdiff_t>((first + count) * m)));
  out.counts.assign(batch.counts.begin() + static_cast<std::ptrdiff_t>(first),
                    batch.counts.begin() + static_cast<std::ptrdiff_t>(first + count));
  out.tokens_per_view = batch.tokens_per_view;
  return out;
}

}  // namespace clarifid
