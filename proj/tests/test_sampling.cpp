#include <gtest/gtest.h>

#include <cmath>

#include "clarifid/errors.hpp"
#include "clarifid/sampling.hpp"

using namespace clarifid;

namespace {

std::vector<double> logits_of(std::initializer_list<double> probs) {
  std::vector<double> out;
  for (double p : probs) out.push_back(std::log(p));
  return out;
}

}  // namespace

TEST(Nucleus, HandExample) {
  const auto p = nucleus_distribution(logits_of({0.5, 0.3, 0.15, 0.05}), 1.0, 0.9);
  ASSERT_EQ(p.size(), 4u);
  EXPECT_NEAR(p[0], 10.0 / 19.0, 1e-12);
  EXPECT_NEAR(p[1], 6.0 / 19.0, 1e-12);
  EXPECT_NEAR(p[2], 3.0 / 19.0, 1e-12);
  EXPECT_EQ(p[3], 0.0);
}

TEST(Nucleus, TiesBreakTowardLowerIds) {
  const auto p = nucleus_distribution(std::vector<double>{0.0, 0.0, 0.0, 0.0}, 1.0, 0.5);
  EXPECT_EQ(p, (std::vector<double>{0.5, 0.5, 0.0, 0.0}));
}

TEST(Nucleus, BlockedIdsGetZeroMass) {
  const std::vector<TokenId> blocked{0, 2};
  const auto p = nucleus_distribution(logits_of({0.4, 0.3, 0.2, 0.1}), 1.0, 1.0, blocked);
  EXPECT_EQ(p[0], 0.0);
  EXPECT_EQ(p[2], 0.0);
  EXPECT_NEAR(p[1] + p[3], 1.0, 1e-15);
}

TEST(Sample, ColdLimitsPickArgmaxAndSecondBest) {
  std::mt19937_64 rng(1);
  const auto logits = logits_of({0.1, 0.6, 0.25, 0.05});
  const std::vector<TokenId> none, top{1};
  for (int i = 0; i < 200; ++i) {
    EXPECT_EQ(sample_next(logits, 1e-4, 1.0, none, rng), 1);
    EXPECT_EQ(sample_next(logits, 1e-4, 1.0, top, rng), 2);
  }
}

TEST(Sample, ReproducibleUnderSeed) {
  const auto logits = logits_of({0.2, 0.2, 0.3, 0.3});
  std::mt19937_64 a(42), b(42);
  for (int i = 0; i < 500; ++i) EXPECT_EQ(sample_next(logits, 1.0, 0.95, {}, a), sample_next(logits, 1.0, 0.95, {}, b));
}

TEST(Sample, FrequenciesFollowTheNucleus) {
  std::mt19937_64 rng(3);
  const auto logits = logits_of({0.5, 0.3, 0.15, 0.05});
  std::vector<int> hits(4, 0);
  const int n = 40000;
  for (int i = 0; i < n; ++i) ++hits[static_cast<std::size_t>(sample_next(logits, 1.0, 0.9, {}, rng))];
  EXPECT_EQ(hits[3], 0);
  EXPECT_NEAR(hits[0] / double(n), 10.0 / 19.0, 0.01);
  EXPECT_NEAR(hits[2] / double(n), 3.0 / 19.0, 0.01);
}

TEST(Sample, Errors) {
  std::mt19937_64 rng(4);
  const std::vector<double> logits{1.0, 2.0};
  const std::vector<TokenId> all{0, 1};
  EXPECT_THROW(sample_next(logits, 1.0, 0.9, all, rng), SamplingError);
  EXPECT_THROW(sample_next(logits, 0.0, 0.9, {}, rng), SamplingError);
  EXPECT_THROW(sample_next(logits, 1.0, 0.0, {}, rng), SamplingError);
  EXPECT_THROW(sample_next(logits, 1.0, 1.5, {}, rng), SamplingError);
}

TEST(MaskedLogSoftmax, ExcludesBlockedFromNormalizer) {
  const std::vector<TokenId> blocked{2};
  const auto lp = masked_log_softmax(std::vector<double>{0.0, 0.0, 5.0}, blocked);
  EXPECT_NEAR(lp[0], std::log(0.5), 1e-15);
  EXPECT_NEAR(lp[1], std::log(0.5), 1e-15);
  EXPECT_TRUE(std::isinf(lp[2]) && lp[2] < 0);
}
