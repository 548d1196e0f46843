#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "clarifid/encoder.hpp"
#include "clarifid/tokenizer.hpp"

namespace clarifid {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t feature_dim = 16;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t policy_layers = 4;
  std::size_t value_layers = 2;
  std::size_t max_len = 128;
  std::size_t ffn_mult = 4;

  void validate() const;
  /// 30 layers, 768 hidden, 12 heads; 6 value layers.
  static ModelConfig paper_scale(std::size_t vocab_size, std::size_t feature_dim);
};

/// Pre-norm block: masked self-attention, cross-attention over the packed
/// visual tokens, then a GELU feed-forward, each with a residual.
struct DecoderLayer {
  Tensor ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_g, ln2_b, cq_w, cq_b, ck_w, ck_b, cv_w, cv_b, co_w, co_b;
  Tensor ln3_g, ln3_b, ff1_w, ff1_b, ff2_w, ff2_b;

  static DecoderLayer init(std::size_t d, std::size_t ffn, std::size_t total_layers, std::mt19937_64& rng);
  NamedTensors named_parameters(const std::string& prefix) const;
  DecoderLayer clone() const;
};

struct DecoderStack {
  Tensor token_embedding;     // [V × d]
  Tensor position_embedding;  // [L_max × d]
  std::vector<DecoderLayer> layers;
  Tensor lnf_g, lnf_b;
  std::size_t heads = 1;

  static DecoderStack init(const ModelConfig& cfg, std::size_t layers, std::mt19937_64& rng);
  std::size_t d_model() const { return token_embedding.dim(1); }
  std::size_t max_len() const { return position_embedding.dim(0); }
  std::size_t vocab_size() const { return token_embedding.dim(0); }
  NamedTensors named_parameters(const std::string& prefix) const;
  DecoderStack clone() const;

  /// Hidden states [B·T × d] for B right-padded rows of length T.
  Tensor forward(std::span<const TokenId> tokens, std::size_t rows, const PackedStudyBatch& batch) const;
};

struct PolicyNet {
  DecoderStack stack;
  Tensor out_w, out_b;  // [d × V], [V]

  static PolicyNet init(const ModelConfig& cfg, std::mt19937_64& rng);
  NamedTensors named_parameters(const std::string& prefix) const;
  PolicyNet clone() const;

  /// Next-token logits [B·T × V].
  Tensor forward(std::span<const TokenId> tokens, std::size_t rows, const PackedStudyBatch& batch) const;
};

struct ValueNet {
  DecoderStack stack;
  Tensor head_w, head_b;  // [d × 1], [1]

  /// Embeddings and the first `layers` blocks copied from the policy; zero head.
  static ValueNet from_policy(const PolicyNet& policy, std::size_t layers);
  NamedTensors named_parameters(const std::string& prefix) const;
  ValueNet clone() const;

  /// One value per position, [B·T].
  Tensor forward(std::span<const TokenId> tokens, std::size_t rows, const PackedStudyBatch& batch) const;
};

/// Logits [T × V] for one prefix against a single-study batch.
Tensor policy_forward(const PolicyNet& policy, std::span<const TokenId> tokens, const PackedStudyBatch& batch);
/// Values [T] for one prefix against a single-study batch.
Tensor value_forward(const ValueNet& value, std::span<const TokenId> tokens, const PackedStudyBatch& batch);

/// Encoder, policy and value network of one training run.
struct Model {
  ModelConfig config;
  ViewEncoder encoder;
  PolicyNet policy;
  ValueNet value;

  static Model init(const ModelConfig& cfg, std::uint64_t seed);
  NamedTensors named_parameters() const;
  Model clone() const;
  std::vector<Tensor> policy_parameters() const;  // encoder + policy
  std::vector<Tensor> value_parameters() const;
};

/// Graph-free incremental decoding for one study: caches per-layer keys and
/// values so each step costs one position.
class DecodeSession {
 public:
  DecodeSession(const PolicyNet& policy, const PackedStudyBatch& batch, std::size_t row = 0);

  /// Appends a token and returns the next-token logits.
  const numerics::Buffer& push(TokenId token);
  std::size_t length() const { return length_; }
  const numerics::Buffer& logits() const { return logits_; }

 private:
  struct LayerCache {
    numerics::Buffer k, v;         // [L_max × d]
    numerics::Buffer ck, cv;       // [M × d] cross keys/values
  };
  const PolicyNet* policy_;
  std::vector<LayerCache> cache_;
  numerics::Buffer key_mask_;  // [M]
  std::size_t visual_ = 0;
  std::size_t length_ = 0;
  numerics::Buffer logits_;
};

}  // namespace clarifid
