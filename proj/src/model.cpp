#include "clarifid/model.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "clarifid/errors.hpp"
#include "clarifid/numerics/kernels.hpp"
#include "clarifid/numerics/ops.hpp"

namespace clarifid {

namespace ops = numerics;
namespace kernels = numerics::kernels;
using numerics::Shape;

namespace {

constexpr double kInitStd = 0.02;

Tensor normal_param(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> values(numerics::shape_size(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::from(std::move(shape), std::move(values), true);
}

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }
Tensor ones_param(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

void append(NamedTensors& out, NamedTensors more) {
  for (auto& entry : more) out.push_back(std::move(entry));
}

// out[n] = x[k]·w[k×n] + b[n]
void affine(const double* x, const Tensor& w, const Tensor& b, double* out) {
  const auto k = w.dim(0), n = w.dim(1);
  Eigen::Map<const Eigen::RowVectorXd> xv(x, static_cast<Eigen::Index>(k));
  kernels::ConstMatrixMap wm(w.data().data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
  Eigen::Map<const Eigen::RowVectorXd> bv(b.data().data(), static_cast<Eigen::Index>(n));
  Eigen::Map<Eigen::RowVectorXd> ov(out, static_cast<Eigen::Index>(n));
  ov.noalias() = xv * wm;
  ov += bv;
}

void norm_row(const numerics::Buffer& x, const Tensor& g, const Tensor& b, numerics::Buffer& out) {
  kernels::layer_norm_row(x, g.data(), b.data(), ops::kLayerNormEps, out, {});
}

// Single-query multi-head attention over `len` cached rows of width d.
void attend(const numerics::Buffer& q, const double* keys, const double* values, std::size_t len,
            std::size_t d, std::size_t heads, const double* key_mask, numerics::Buffer& out) {
  const auto dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  numerics::Buffer p(len);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t j = 0; j < len; ++j) {
      if (key_mask && key_mask[j] == 0.0) {
        p[j] = -std::numeric_limits<double>::infinity();
        continue;
      }
      double s = 0.0;
      for (std::size_t c = 0; c < dh; ++c) s += q[h * dh + c] * keys[j * d + h * dh + c];
      p[j] = s * scale;
    }
    kernels::softmax_inplace(p);
    for (std::size_t c = 0; c < dh; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        if (p[j] != 0.0) acc += p[j] * values[j * d + h * dh + c];
      }
      out[h * dh + c] = acc;
    }
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size <= static_cast<std::size_t>(kNumReserved)) throw ConfigError("vocabulary is smaller than the reserved set");
  if (d_model == 0 || heads == 0 || d_model % heads != 0) throw ConfigError("d_model must be a positive multiple of heads");
  if (policy_layers == 0) throw ConfigError("policy needs at least one layer");
  if (value_layers == 0 || value_layers > policy_layers) {
    throw ConfigError("value layers must lie in [1, policy layers] (the value net starts from policy blocks)");
  }
  if (max_len < 4) throw ConfigError("max_len must be at least 4");
  if (ffn_mult == 0 || feature_dim == 0) throw ConfigError("ffn_mult and feature_dim must be positive");
}

ModelConfig ModelConfig::paper_scale(std::size_t vocab_size, std::size_t feature_dim) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.feature_dim = feature_dim;
  c.d_model = 768;
  c.heads = 12;
  c.policy_layers = 30;
  c.value_layers = 6;
  c.max_len = 1024;
  return c;
}

DecoderLayer DecoderLayer::init(std::size_t d, std::size_t ffn, std::size_t total_layers, std::mt19937_64& rng) {
  const double proj_std = kInitStd / std::sqrt(2.0 * static_cast<double>(total_layers));
  DecoderLayer l;
  l.ln1_g = ones_param({d});
  l.ln1_b = zeros_param({d});
  l.wq = normal_param({d, d}, kInitStd, rng);
  l.bq = zeros_param({d});
  l.wk = normal_param({d, d}, kInitStd, rng);
  l.bk = zeros_param({d});
  l.wv = normal_param({d, d}, kInitStd, rng);
  l.bv = zeros_param({d});
  l.wo = normal_param({d, d}, proj_std, rng);
  l.bo = zeros_param({d});
  l.ln2_g = ones_param({d});
  l.ln2_b = zeros_param({d});
  l.cq_w = normal_param({d, d}, kInitStd, rng);
  l.cq_b = zeros_param({d});
  l.ck_w = normal_param({d, d}, kInitStd, rng);
  l.ck_b = zeros_param({d});
  l.cv_w = normal_param({d, d}, kInitStd, rng);
  l.cv_b = zeros_param({d});
  l.co_w = normal_param({d, d}, proj_std, rng);
  l.co_b = zeros_param({d});
  l.ln3_g = ones_param({d});
  l.ln3_b = zeros_param({d});
  l.ff1_w = normal_param({d, ffn}, kInitStd, rng);
  l.ff1_b = zeros_param({ffn});
  l.ff2_w = normal_param({ffn, d}, proj_std, rng);
  l.ff2_b = zeros_param({d});
  return l;
}

NamedTensors DecoderLayer::named_parameters(const std::string& p) const {
  return {{p + "ln1_g", ln1_g}, {p + "ln1_b", ln1_b}, {p + "wq", wq},       {p + "bq", bq},
          {p + "wk", wk},       {p + "bk", bk},       {p + "wv", wv},       {p + "bv", bv},
          {p + "wo", wo},       {p + "bo", bo},       {p + "ln2_g", ln2_g}, {p + "ln2_b", ln2_b},
          {p + "cq_w", cq_w},   {p + "cq_b", cq_b},   {p + "ck_w", ck_w},   {p + "ck_b", ck_b},
          {p + "cv_w", cv_w},   {p + "cv_b", cv_b},   {p + "co_w", co_w},   {p + "co_b", co_b},
          {p + "ln3_g", ln3_g}, {p + "ln3_b", ln3_b}, {p + "ff1_w", ff1_w}, {p + "ff1_b", ff1_b},
          {p + "ff2_w", ff2_w}, {p + "ff2_b", ff2_b}};
}

DecoderLayer DecoderLayer::clone() const {
  DecoderLayer l;
  l.ln1_g = ln1_g.clone(), l.ln1_b = ln1_b.clone(), l.wq = wq.clone(), l.bq = bq.clone();
  l.wk = wk.clone(), l.bk = bk.clone(), l.wv = wv.clone(), l.bv = bv.clone();
  l.wo = wo.clone(), l.bo = bo.clone(), l.ln2_g = ln2_g.clone(), l.ln2_b = ln2_b.clone();
  l.cq_w = cq_w.clone(), l.cq_b = cq_b.clone(), l.ck_w = ck_w.clone(), l.ck_b = ck_b.clone();
  l.cv_w = cv_w.clone(), l.cv_b = cv_b.clone(), l.co_w = co_w.clone(), l.co_b = co_b.clone();
  l.ln3_g = ln3_g.clone(), l.ln3_b = ln3_b.clone(), l.ff1_w = ff1_w.clone(), l.ff1_b = ff1_b.clone();
  l.ff2_w = ff2_w.clone(), l.ff2_b = ff2_b.clone();
  return l;
}

DecoderStack DecoderStack::init(const ModelConfig& cfg, std::size_t layers, std::mt19937_64& rng) {
  DecoderStack s;
  s.token_embedding = normal_param({cfg.vocab_size, cfg.d_model}, kInitStd, rng);
  s.position_embedding = normal_param({cfg.max_len, cfg.d_model}, kInitStd / 2.0, rng);
  for (std::size_t i = 0; i < layers; ++i) {
    s.layers.push_back(DecoderLayer::init(cfg.d_model, cfg.ffn_mult * cfg.d_model, layers, rng));
  }
  s.lnf_g = ones_param({cfg.d_model});
  s.lnf_b = zeros_param({cfg.d_model});
  s.heads = cfg.heads;
  return s;
}

NamedTensors DecoderStack::named_parameters(const std::string& prefix) const {
  NamedTensors out = {{prefix + "token_embedding", token_embedding},
                      {prefix + "position_embedding", position_embedding}};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    append(out, layers[i].named_parameters(prefix + "layers." + std::to_string(i) + "."));
  }
  out.emplace_back(prefix + "lnf_g", lnf_g);
  out.emplace_back(prefix + "lnf_b", lnf_b);
  return out;
}

DecoderStack DecoderStack::clone() const {
  DecoderStack s;
  s.token_embedding = token_embedding.clone();
  s.position_embedding = position_embedding.clone();
  for (const auto& l : layers) s.layers.push_back(l.clone());
  s.lnf_g = lnf_g.clone();
  s.lnf_b = lnf_b.clone();
  s.heads = heads;
  return s;
}

Tensor DecoderStack::forward(std::span<const TokenId> tokens, std::size_t rows, const PackedStudyBatch& batch) const {
  if (rows == 0 || tokens.empty() || tokens.size() % rows != 0) {
    throw ShapeError("decoder: " + std::to_string(tokens.size()) + " tokens do not split into " +
                     std::to_string(rows) + " rows");
  }
  if (batch.batch() != rows) {
    throw ShapeError("decoder: " + std::to_string(rows) + " token rows against " +
                     std::to_string(batch.batch()) + " studies");
  }
  const auto t = tokens.size() / rows;
  if (t > max_len()) {
    throw LengthError("prefix of " + std::to_string(t) + " tokens exceeds L_max " + std::to_string(max_len()));
  }
  for (auto id : tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size()) {
      throw ShapeError("token id " + std::to_string(id) + " outside vocabulary");
    }
  }
  const auto d = d_model();
  std::vector<int> positions(t);
  std::iota(positions.begin(), positions.end(), 0);
  auto x = ops::add_tiled(ops::embedding(token_embedding, tokens), ops::embedding(position_embedding, positions));
  const auto visual = ops::reshape(batch.s_hat, {rows * batch.max_tokens(), d});
  const ops::AttentionSpec self_spec{rows, heads, true, std::nullopt};
  const ops::AttentionSpec cross_spec{rows, heads, false, batch.mask};
  for (const auto& l : layers) {
    auto h = ops::layer_norm(x, l.ln1_g, l.ln1_b);
    auto a = ops::attention(ops::linear(h, l.wq, l.bq), ops::linear(h, l.wk, l.bk), ops::linear(h, l.wv, l.bv),
                            self_spec);
    x = ops::add(x, ops::linear(a, l.wo, l.bo));
    h = ops::layer_norm(x, l.ln2_g, l.ln2_b);
    a = ops::attention(ops::linear(h, l.cq_w, l.cq_b), ops::linear(visual, l.ck_w, l.ck_b),
                       ops::linear(visual, l.cv_w, l.cv_b), cross_spec);
    x = ops::add(x, ops::linear(a, l.co_w, l.co_b));
    h = ops::layer_norm(x, l.ln3_g, l.ln3_b);
    x = ops::add(x, ops::linear(ops::gelu(ops::linear(h, l.ff1_w, l.ff1_b)), l.ff2_w, l.ff2_b));
  }
  return ops::layer_norm(x, lnf_g, lnf_b);
}

PolicyNet PolicyNet::init(const ModelConfig& cfg, std::mt19937_64& rng) {
  PolicyNet p;
  p.stack = DecoderStack::init(cfg, cfg.policy_layers, rng);
  p.out_w = normal_param({cfg.d_model, cfg.vocab_size}, kInitStd, rng);
  p.out_b = zeros_param({cfg.vocab_size});
  return p;
}

NamedTensors PolicyNet::named_parameters(const std::string& prefix) const {
  auto out = stack.named_parameters(prefix);
  out.emplace_back(prefix + "out_w", out_w);
  out.emplace_back(prefix + "out_b", out_b);
  return out;
}

PolicyNet PolicyNet::clone() const { return {stack.clone(), out_w.clone(), out_b.clone()}; }

Tensor PolicyNet::forward(std::span<const TokenId> tokens, std::size_t rows, const PackedStudyBatch& batch) const {
  return ops::linear(stack.forward(tokens, rows, batch), out_w, out_b);
}

ValueNet ValueNet::from_policy(const PolicyNet& policy, std::size_t layers) {
  if (layers == 0 || layers > policy.stack.layers.size()) {
    throw ConfigError("value net needs between 1 and " + std::to_string(policy.stack.layers.size()) + " layers");
  }
  ValueNet v;
  v.stack.token_embedding = policy.stack.token_embedding.clone();
  v.stack.position_embedding = policy.stack.position_embedding.clone();
  for (std::size_t i = 0; i < layers; ++i) v.stack.layers.push_back(policy.stack.layers[i].clone());
  v.stack.lnf_g = policy.stack.lnf_g.clone();
  v.stack.lnf_b = policy.stack.lnf_b.clone();
  v.stack.heads = policy.stack.heads;
  const auto d = policy.stack.d_model();
  v.head_w = zeros_param({d, 1});
  v.head_b = zeros_param({1});
  return v;
}

NamedTensors ValueNet::named_parameters(const std::string& prefix) const {
  auto out = stack.named_parameters(prefix);
  out.emplace_back(prefix + "head_w", head_w);
  out.emplace_back(prefix + "head_b", head_b);
  return out;
}

ValueNet ValueNet::clone() const { return {stack.clone(), head_w.clone(), head_b.clone()}; }

Tensor ValueNet::forward(std::span<const TokenId> tokens, std::size_t rows, const PackedStudyBatch& batch) const {
  const auto v = ops::linear(stack.forward(tokens, rows, batch), head_w, head_b);
  return ops::reshape(v, {tokens.size()});
}

Tensor policy_forward(const PolicyNet& policy, std::span<const TokenId> tokens, const PackedStudyBatch& batch) {
  if (batch.batch() != 1) throw ShapeError("policy_forward takes a single-study batch");
  return policy.forward(tokens, 1, batch);
}

Tensor value_forward(const ValueNet& value, std::span<const TokenId> tokens, const PackedStudyBatch& batch) {
  if (batch.batch() != 1) throw ShapeError("value_forward takes a single-study batch");
  return value.forward(tokens, 1, batch);
}

Model Model::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  Model m;
  m.config = cfg;
  m.encoder = ViewEncoder::init(cfg.feature_dim, cfg.d_model, rng);
  m.policy = PolicyNet::init(cfg, rng);
  m.value = ValueNet::from_policy(m.policy, cfg.value_layers);
  return m;
}

NamedTensors Model::named_parameters() const {
  auto out = encoder.named_parameters("encoder.");
  append(out, policy.named_parameters("policy."));
  append(out, value.named_parameters("value."));
  return out;
}

Model Model::clone() const { return {config, encoder.clone(), policy.clone(), value.clone()}; }

std::vector<Tensor> Model::policy_parameters() const {
  std::vector<Tensor> out;
  for (auto& [_, t] : encoder.named_parameters("")) out.push_back(t);
  for (auto& [_, t] : policy.named_parameters("")) out.push_back(t);
  return out;
}

std::vector<Tensor> Model::value_parameters() const {
  std::vector<Tensor> out;
  for (auto& [_, t] : value.named_parameters("")) out.push_back(t);
  return out;
}

DecodeSession::DecodeSession(const PolicyNet& policy, const PackedStudyBatch& batch, std::size_t row)
    : policy_(&policy) {
  if (row >= batch.batch()) throw ShapeError("decode session row outside batch");
  const auto d = policy.stack.d_model();
  const auto l_max = policy.stack.max_len();
  visual_ = batch.max_tokens();
  const auto mask = batch.mask.data();
  key_mask_.assign(mask.begin() + static_cast<std::ptrdiff_t>(row * visual_),
                   mask.begin() + static_cast<std::ptrdiff_t>((row + 1) * visual_));
  const double* s_hat = batch.s_hat.data().data() + row * visual_ * d;
  for (const auto& l : policy.stack.layers) {
    LayerCache c;
    c.k.assign(l_max * d, 0.0);
    c.v.assign(l_max * d, 0.0);
    c.ck.resize(visual_ * d);
    c.cv.resize(visual_ * d);
    for (std::size_t j = 0; j < visual_; ++j) {
      affine(s_hat + j * d, l.ck_w, l.ck_b, c.ck.data() + j * d);
      affine(s_hat + j * d, l.cv_w, l.cv_b, c.cv.data() + j * d);
    }
    cache_.push_back(std::move(c));
  }
}

const numerics::Buffer& DecodeSession::push(TokenId token) {
  const auto& stack = policy_->stack;
  const auto d = stack.d_model();
  if (length_ >= stack.max_len()) {
    throw LengthError("decode session is full at L_max " + std::to_string(stack.max_len()));
  }
  if (token < 0 || static_cast<std::size_t>(token) >= stack.vocab_size()) {
    throw ShapeError("token id " + std::to_string(token) + " outside vocabulary");
  }
  numerics::Buffer x(d), h(d), q(d), a(d), o(d);
  const auto emb = stack.token_embedding.data();
  const auto pos = stack.position_embedding.data();
  for (std::size_t c = 0; c < d; ++c) {
    x[c] = emb[static_cast<std::size_t>(token) * d + c] + pos[length_ * d + c];
  }
  for (std::size_t li = 0; li < stack.layers.size(); ++li) {
    const auto& l = stack.layers[li];
    auto& c = cache_[li];
    norm_row(x, l.ln1_g, l.ln1_b, h);
    affine(h.data(), l.wq, l.bq, q.data());
    affine(h.data(), l.wk, l.bk, c.k.data() + length_ * d);
    affine(h.data(), l.wv, l.bv, c.v.data() + length_ * d);
    attend(q, c.k.data(), c.v.data(), length_ + 1, d, stack.heads, nullptr, a);
    affine(a.data(), l.wo, l.bo, o.data());
    for (std::size_t j = 0; j < d; ++j) x[j] += o[j];

    norm_row(x, l.ln2_g, l.ln2_b, h);
    affine(h.data(), l.cq_w, l.cq_b, q.data());
    attend(q, c.ck.data(), c.cv.data(), visual_, d, stack.heads, key_mask_.data(), a);
    affine(a.data(), l.co_w, l.co_b, o.data());
    for (std::size_t j = 0; j < d; ++j) x[j] += o[j];

    norm_row(x, l.ln3_g, l.ln3_b, h);
    numerics::Buffer f(l.ff1_w.dim(1));
    affine(h.data(), l.ff1_w, l.ff1_b, f.data());
    for (auto& v : f) v = kernels::gelu(v);
    affine(f.data(), l.ff2_w, l.ff2_b, o.data());
    for (std::size_t j = 0; j < d; ++j) x[j] += o[j];
  }
  norm_row(x, stack.lnf_g, stack.lnf_b, h);
  logits_.resize(stack.vocab_size());
  affine(h.data(), policy_->out_w, policy_->out_b, logits_.data());
  ++length_;
  return logits_;
}

}  // namespace clarifid
