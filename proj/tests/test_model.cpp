#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "clarifid/checkpoint.hpp"
#include "clarifid/decode.hpp"
#include "clarifid/errors.hpp"
#include "clarifid/numerics/ops.hpp"
#include "test_support.hpp"

using namespace clarifid;
namespace ops = clarifid::numerics;

namespace {

PackedStudyBatch batch_of(const Model& m, std::initializer_list<std::size_t> idx) {
  std::vector<const StudyRecord*> studies;
  for (auto i : idx) studies.push_back(&fixture::small_corpus().train[i]);
  return encode_studies(m.encoder, studies);
}

// Index of a study with the given view count in the small corpus.
std::size_t with_views(std::size_t k, std::size_t skip = 0) {
  const auto& train = fixture::small_corpus().train;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].views.size() == k && skip-- == 0) return i;
  }
  throw std::runtime_error("no study with that many views");
}

void scramble_padding(PackedStudyBatch& b, std::mt19937_64& rng) {
  b.s_hat = b.s_hat.clone();
  auto data = b.s_hat.mutable_data();
  std::normal_distribution<double> n(0.0, 50.0);
  const auto d = b.d_model(), m = b.max_tokens();
  for (std::size_t i = 0; i < b.batch(); ++i) {
    for (std::size_t t = 0; t < m; ++t) {
      if (b.mask.at(i, t) != 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) data[(i * m + t) * d + j] = n(rng);
    }
  }
}

}  // namespace

TEST(Policy, CausalityIsExact) {
  const auto m = fixture::tiny_model();
  const auto b = batch_of(m, {0});
  TokenSequence seq = encode_report(fixture::small_corpus().train[0].report, fixture::small_vocab());
  const auto before = policy_forward(m.policy, seq, b);
  const std::size_t t = seq.size() / 2;
  seq[t] = seq[t] == 7 ? 8 : 7;
  const auto after = policy_forward(m.policy, seq, b);
  const auto v = before.dim(1);
  for (std::size_t i = 0; i < t * v; ++i) ASSERT_EQ(before.data()[i], after.data()[i]);
  bool changed = false;
  for (std::size_t i = t * v; i < before.size(); ++i) changed |= before.data()[i] != after.data()[i];
  EXPECT_TRUE(changed);
}

TEST(Policy, PaddedVisualSlotsAreInert) {
  const auto m = fixture::tiny_model();
  std::mt19937_64 rng(4);
  auto b = batch_of(m, {with_views(1), with_views(3), with_views(2)});
  const TokenSequence tokens{kBos, 9, 10, kNext, 11, kImpression, 12, kEos, kBos, 13, 14, kImpression, 9, kEos, kPad,
                             kPad, kBos, 7, kImpression, 8, kEos, kPad, kPad, kPad};
  const auto logits = m.policy.forward(tokens, 3, b);
  const auto values = m.value.forward(tokens, 3, b);
  scramble_padding(b, rng);
  const auto logits2 = m.policy.forward(tokens, 3, b);
  const auto values2 = m.value.forward(tokens, 3, b);
  for (std::size_t i = 0; i < logits.size(); ++i) ASSERT_EQ(logits.data()[i], logits2.data()[i]);
  for (std::size_t i = 0; i < values.size(); ++i) ASSERT_EQ(values.data()[i], values2.data()[i]);
}

TEST(Policy, OverlongPrefixIsRejected) {
  const auto m = fixture::tiny_model();
  const TokenSequence seq(m.config.max_len + 1, 7);
  EXPECT_THROW(policy_forward(m.policy, seq, batch_of(m, {0})), LengthError);
}

TEST(Policy, FreshInitIsNearUniform) {
  const auto m = fixture::tiny_model();
  const auto seq = encode_report(fixture::small_corpus().train[1].report, fixture::small_vocab());
  const auto logits = policy_forward(m.policy, seq, batch_of(m, {1}));
  for (double x : logits.data()) EXPECT_LT(std::abs(x), 1.0);
}

TEST(Policy, DecodeSessionMatchesFullForward) {
  const auto m = fixture::tiny_model();
  const auto b = batch_of(m, {with_views(2)});
  const auto seq = encode_report(fixture::small_corpus().train[with_views(2)].report, fixture::small_vocab());
  const auto full = policy_forward(m.policy, seq, b);
  DecodeSession session(m.policy, b);
  const auto v = full.dim(1);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const auto& row = session.push(seq[t]);
    for (std::size_t j = 0; j < v; ++j) ASSERT_NEAR(row[j], full.data()[t * v + j], 1e-10) << t << "," << j;
  }
}

TEST(Policy, CrossEntropyGradientMatchesFiniteDifferences) {
  auto cfg = fixture::tiny_model_config(fixture::small_vocab().size());
  cfg.max_len = 12;
  const auto m = Model::init(cfg, 8);
  const auto b = batch_of(m, {with_views(2)});
  const TokenSequence in{kBos, 9, 10, kNext, 11, kImpression};
  const std::vector<int> target{9, 10, kNext, 11, kImpression, 12};
  std::vector<Tensor> params;
  for (const auto& [name, t] : m.policy.named_parameters("policy.")) params.push_back(t);
  for (auto& p : params) p.set_requires_grad(true);
  const auto loss = [&] { return ops::cross_entropy_logits(policy_forward(m.policy, in, b), target, -1); };
  EXPECT_LT(fixture::gradient_error(loss, params), 1e-3);
}

TEST(Value, ZeroHeadAndShape) {
  const auto m = fixture::tiny_model();
  const TokenSequence seq{kBos, 9, 10, kImpression, 11, kEos};
  const auto v = value_forward(m.value, seq, batch_of(m, {0}));
  ASSERT_EQ(v.size(), seq.size());
  for (double x : v.data()) EXPECT_EQ(x, 0.0);
}

TEST(Value, CandidateScoreEqualsFullRecomputation) {
  auto m = fixture::tiny_model();
  std::mt19937_64 rng(12);
  for (auto& x : m.value.head_w.mutable_data()) x = std::normal_distribution<double>(0.0, 0.5)(rng);
  const auto b = batch_of(m, {with_views(3)});
  DecodeConfig cfg;
  cfg.k = 2;
  const auto c = generate_candidate(m.policy, b, cfg, 5);
  const auto full = value_forward(m.value, c.tokens, b);
  EXPECT_EQ(value_score(m.value, c.tokens, b), full.data()[full.size() - 1]);
}

TEST(Model, PolicyAndValueShareNoStorage) {
  const auto m = fixture::tiny_model();
  std::set<const void*> policy;
  for (const auto& t : m.policy_parameters()) policy.insert(t.impl().get());
  for (const auto& t : m.value_parameters()) EXPECT_EQ(policy.count(t.impl().get()), 0u);
  std::set<std::string> names;
  for (const auto& [name, t] : m.named_parameters()) EXPECT_TRUE(names.insert(name).second) << name;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  fixture::TempDir dir("ckpt");
  const auto m = fixture::tiny_model(17);
  save_checkpoint(dir.path / "m.ckpt", m);
  const auto back = load_checkpoint(dir.path / "m.ckpt");
  const auto a = m.named_parameters(), b = back.named_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_EQ(a[i].second.shape(), b[i].second.shape());
    EXPECT_TRUE(std::equal(a[i].second.data().begin(), a[i].second.data().end(), b[i].second.data().begin()));
  }
  EXPECT_EQ(back.config.heads, m.config.heads);
  EXPECT_EQ(back.config.policy_layers, m.config.policy_layers);
  EXPECT_EQ(back.config.value_layers, m.config.value_layers);
}

TEST(Checkpoint, RejectsBadFiles) {
  fixture::TempDir dir("ckpt_bad");
  {
    std::ofstream out(dir.path / "bad.ckpt", std::ios::binary);
    out << "NOPE!garbage";
  }
  EXPECT_THROW(load_checkpoint(dir.path / "bad.ckpt"), LoadError);
  EXPECT_THROW(load_checkpoint(dir.path / "missing.ckpt"), LoadError);

  auto tensors = fixture::tiny_model().named_parameters();
  tensors.pop_back();
  write_tensors(dir.path / "partial.ckpt", tensors);
  EXPECT_THROW(load_checkpoint(dir.path / "partial.ckpt"), LoadError);

  const auto m = fixture::tiny_model();
  save_checkpoint(dir.path / "ok.ckpt", m);
  const auto size = std::filesystem::file_size(dir.path / "ok.ckpt");
  std::filesystem::resize_file(dir.path / "ok.ckpt", size - 7);
  EXPECT_THROW(load_checkpoint(dir.path / "ok.ckpt"), LoadError);
}
