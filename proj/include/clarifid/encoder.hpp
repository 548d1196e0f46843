#pragma once

#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "clarifid/numerics/tensor.hpp"
#include "clarifid/synthdata.hpp"

namespace clarifid {

using numerics::Tensor;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Shared token-wise perceptron E: D_in -> d (GELU) -> d.
struct ViewEncoder {
  Tensor w1, b1, w2, b2;

  static ViewEncoder init(std::size_t feature_dim, std::size_t d_model, std::mt19937_64& rng);
  std::size_t feature_dim() const { return w1.dim(0); }
  std::size_t d_model() const { return w2.dim(1); }
  NamedTensors named_parameters(const std::string& prefix) const;
  ViewEncoder clone() const;
};

/// Padded visual tokens for a batch of studies and their validity mask.
struct PackedStudyBatch {
  Tensor s_hat;  // [B × M_max × d], zero at padded slots
  Tensor mask;   // [B × M_max], leading ones per row
  std::vector<std::size_t> counts;  // views per study
  std::size_t tokens_per_view = 0;

  std::size_t batch() const { return counts.size(); }
  std::size_t max_tokens() const { return mask.dim(1); }
  std::size_t d_model() const { return s_hat.dim(2); }
};

/// Applies E to every view: [|I| × N × D_in] -> [|I| × N × d].
Tensor encode_views(const ViewEncoder& encoder, std::span<const FeatureGrid* const> views);

/// Flattens each study's views in order, right-pads with zeros, builds the mask.
PackedStudyBatch pack_views(const Tensor& features, std::span<const std::size_t> counts);

/// Per-study [K_i·N × d] blocks recovered from a packed batch.
std::vector<Tensor> unpack_views(const PackedStudyBatch& batch);

/// encode_views + pack_views for a list of studies. When `noise_sigma` is
/// positive, Gaussian noise drawn from `rng` is added to every input feature.
PackedStudyBatch encode_studies(const ViewEncoder& encoder, std::span<const StudyRecord* const> studies,
                                double noise_sigma = 0.0, std::mt19937_64* rng = nullptr);

/// Rows [first, first + count) of a packed batch, as their own packed batch.
PackedStudyBatch slice_batch(const PackedStudyBatch& batch, std::size_t first, std::size_t count);

}  // namespace clarifid
