#include <gtest/gtest.h>

#include "clarifid/decode.hpp"
#include "clarifid/errors.hpp"
#include "test_support.hpp"

using namespace clarifid;

namespace {

PackedStudyBatch batch_for(const Model& m, std::size_t i) {
  const StudyRecord* s = &fixture::small_corpus().train[i];
  return encode_studies(m.encoder, std::span(&s, 1));
}

// A policy whose logits ignore the input and always favour `id`.
PolicyNet always(const Model& m, TokenId id) {
  auto p = m.policy.clone();
  std::fill(p.out_w.mutable_data().begin(), p.out_w.mutable_data().end(), 0.0);
  std::fill(p.out_b.mutable_data().begin(), p.out_b.mutable_data().end(), 0.0);
  p.out_b.mutable_data()[static_cast<std::size_t>(id)] = 50.0;
  return p;
}

void expect_well_formed(const Candidate& c, std::size_t k) {
  const auto& t = c.tokens;
  ASSERT_GE(t.size(), 3u);
  EXPECT_EQ(t.front(), kBos);
  EXPECT_EQ(t.back(), kEos);
  EXPECT_EQ(std::count(t.begin(), t.end(), kImpression), 1);
  EXPECT_EQ(std::count(t.begin(), t.end(), kEos), 1);
  const auto boundary = std::find(t.begin(), t.end(), kImpression);
  EXPECT_GE(static_cast<std::size_t>(std::count(t.begin(), boundary, kNext)), k);
  std::size_t nexts = 0;
  for (auto it = t.begin(); it != boundary; ++it) {
    if (*it == kNext) ++nexts;
    if (nexts < k) {
      EXPECT_NE(*it, kEos);
      EXPECT_NE(*it, kImpression);
    }
  }
}

}  // namespace

TEST(DecodeConfig, Validation) {
  DecodeConfig c;
  EXPECT_NO_THROW(c.validate());
  c.candidates = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.t_imp = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.max_len = c.k + 2;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Forcing, AdversarialEosPolicyIsForced) {
  const auto m = fixture::tiny_model();
  const auto p = always(m, kEos);
  DecodeConfig cfg;
  cfg.k = 2;
  cfg.t_find = cfg.t_imp = 1e-3;
  cfg.top_p = 1.0;
  const auto c = generate_candidate(p, batch_for(m, 0), cfg, 1);
  EXPECT_EQ(c.tokens, (TokenSequence{kBos, kNext, kNext, kImpression, kEos}));
  EXPECT_EQ(c.replaced, 2u);
  EXPECT_FALSE(c.truncated);
}

TEST(Forcing, ZeroKAppendsImpressionImmediately) {
  const auto m = fixture::tiny_model();
  DecodeConfig cfg;
  cfg.k = 0;
  const auto c = generate_candidate(m.policy, batch_for(m, 1), cfg, 2);
  ASSERT_GE(c.tokens.size(), 3u);
  EXPECT_EQ(c.tokens[1], kImpression);
  expect_well_formed(c, 0);
}

TEST(Forcing, InvariantHoldsOnRandomPolicies) {
  for (std::uint64_t model_seed = 0; model_seed < 3; ++model_seed) {
    const auto m = fixture::tiny_model(model_seed);
    for (std::size_t k : {1u, 4u, 10u}) {
      DecodeConfig cfg;
      cfg.k = k;
      cfg.max_len = 64;
      for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto c = generate_candidate(m.policy, batch_for(m, seed % 10), cfg, seed);
        expect_well_formed(c, k);
        EXPECT_LE(c.tokens.size(), cfg.max_len);
      }
    }
  }
}

TEST(Forcing, CapTruncatesWithTerminalEos) {
  const auto m = fixture::tiny_model();
  const auto p = always(m, 9);
  DecodeConfig cfg;
  cfg.k = 3;
  cfg.max_len = 20;
  const auto c = generate_candidate(p, batch_for(m, 0), cfg, 3);
  EXPECT_TRUE(c.truncated);
  EXPECT_EQ(c.tokens.size(), 20u);
  expect_well_formed(c, 3);
}

TEST(Unforced, PolicyEndsFindingsItself) {
  const auto m = fixture::tiny_model();
  DecodeConfig cfg;
  cfg.force = false;
  cfg.max_len = 48;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto c = generate_candidate(m.policy, batch_for(m, 2), cfg, seed);
    expect_well_formed(c, 0);
    EXPECT_EQ(c.replaced, 0u);
  }
}

TEST(Actions, LogProbsMatchPhaseDistributions) {
  const auto m = fixture::tiny_model();
  const auto b = batch_for(m, 3);
  DecodeConfig cfg;
  cfg.k = 2;
  const auto c = generate_candidate(m.policy, b, cfg, 4);
  const auto logits = policy_forward(m.policy, c.tokens, b);
  const auto v = logits.dim(1);
  // <bos>, the appended <impression> and, at the cap, the appended <eos>.
  ASSERT_EQ(c.actions.size() + 2 + (c.truncated ? 1 : 0), c.tokens.size());
  for (const auto& a : c.actions) {
    const std::vector<double> row(logits.data().begin() + static_cast<std::ptrdiff_t>((a.position - 1) * v),
                                  logits.data().begin() + static_cast<std::ptrdiff_t>(a.position * v));
    const auto blocked = blocked_ids(a.phase, cfg.force);
    double z = 0.0, mass = 0.0;
    for (std::size_t id = 0; id < v; ++id) {
      if (std::find(blocked.begin(), blocked.end(), static_cast<TokenId>(id)) != blocked.end()) continue;
      z += std::exp(row[id]);
    }
    for (auto id : a.ids) mass += std::exp(row[static_cast<std::size_t>(id)]);
    EXPECT_NEAR(a.logprob, std::log(mass / z), 1e-9);
    EXPECT_NE(std::find(a.ids.begin(), a.ids.end(), c.tokens[a.position]), a.ids.end());
  }
}

TEST(BestOfN, StubScorerPicksLastCandidate) {
  const auto m = fixture::tiny_model();
  DecodeConfig cfg;
  cfg.k = 1;
  cfg.candidates = 5;
  std::size_t calls = 0;
  const auto r = generate_report(m.policy, [&](const TokenSequence&) { return static_cast<double>(calls++); },
                                 batch_for(m, 0), cfg);
  EXPECT_EQ(r.chosen, 4u);
  EXPECT_EQ(r.tokens, r.candidates[4].tokens);
}

TEST(BestOfN, SingleCandidateAndTies) {
  const auto m = fixture::tiny_model();
  DecodeConfig cfg;
  cfg.k = 1;
  cfg.candidates = 1;
  const auto one = generate_report(m.policy, m.value, batch_for(m, 0), cfg);
  EXPECT_EQ(one.chosen, 0u);
  EXPECT_EQ(one.tokens, generate_candidate(m.policy, batch_for(m, 0), cfg, candidate_seed(cfg.seed, 0)).tokens);
  cfg.candidates = 6;
  const auto tied = generate_report(m.policy, [](const TokenSequence&) { return 1.0; }, batch_for(m, 0), cfg);
  EXPECT_EQ(tied.chosen, 0u);
}

TEST(BestOfN, ChosenScoreIsTheMaximum) {
  auto m = fixture::tiny_model();
  std::mt19937_64 rng(5);
  for (auto& x : m.value.head_w.mutable_data()) x = std::normal_distribution<double>(0.0, 1.0)(rng);
  DecodeConfig cfg;
  cfg.k = 2;
  cfg.max_len = 48;
  for (std::uint64_t s = 0; s < 10; ++s) {
    cfg.seed = s;
    const auto r = generate_report(m.policy, m.value, batch_for(m, s), cfg);
    EXPECT_EQ(r.scores[r.chosen], *std::max_element(r.scores.begin(), r.scores.end()));
  }
}

TEST(BestOfN, ParallelMatchesSequentialAndSeedsReproduce) {
  auto m = fixture::tiny_model();
  DecodeConfig cfg;
  cfg.k = 2;
  cfg.max_len = 48;
  cfg.seed = 77;
  const auto a = generate_report(m.policy, m.value, batch_for(m, 4), cfg);
  const auto b = generate_report(m.policy, m.value, batch_for(m, 4), cfg);
  cfg.parallel = true;
  const auto c = generate_report(m.policy, m.value, batch_for(m, 4), cfg);
  ASSERT_EQ(a.candidates.size(), c.candidates.size());
  for (std::size_t j = 0; j < a.candidates.size(); ++j) {
    EXPECT_EQ(a.candidates[j].tokens, b.candidates[j].tokens);
    EXPECT_EQ(a.candidates[j].tokens, c.candidates[j].tokens);
  }
  EXPECT_EQ(a.scores, c.scores);
}
