#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "clarifid/errors.hpp"
#include "clarifid/ppo.hpp"
#include "clarifid/reward.hpp"
#include "test_support.hpp"

using namespace clarifid;

namespace {

Trajectory synthetic(std::size_t len, double raw, std::vector<double> values = {}) {
  Trajectory t;
  t.candidate.actions.resize(len);
  t.ref_logprobs.assign(len, 0.0);
  t.values = values.empty() ? std::vector<double>(len, 0.0) : std::move(values);
  t.raw_reward = raw;
  t.rewards.assign(len, 0.0);
  if (len) t.rewards.back() = raw;
  return t;
}

PPOConfig small_ppo() {
  PPOConfig cfg;
  cfg.group_size = 2;
  cfg.batch_studies = 2;
  cfg.accumulation = 1;
  cfg.max_len = 48;
  cfg.lr_start = 1e-3;
  cfg.lr_peak = 1e-3;
  cfg.warmup_iters = 0;
  cfg.val_subset = 2;
  return cfg;
}

DecodeConfig small_eval() {
  DecodeConfig d;
  d.force = false;
  d.candidates = 1;
  d.max_len = 48;
  return d;
}

struct Fixture {
  PPOState state = PPOState::from_pretrained(fixture::tiny_model(11));
  std::vector<const StudyRecord*> studies{&fixture::small_corpus().train[0], &fixture::small_corpus().train[1]};
  PPOConfig cfg = small_ppo();
  RolloutBatch batch;
  std::vector<std::size_t> all;

  Fixture() {
    batch = collect_rollouts(state.model, state.reference, studies, fixture::small_vocab(), cfg, 5);
    normalize_rewards(batch, cfg);
    compute_advantages(batch, cfg.gamma, cfg.lambda);
    for (std::size_t i = 0; i < batch.trajectories.size(); ++i) all.push_back(i);
  }

  void set_advantages(double a) {
    for (auto& t : batch.trajectories) t.advantages.assign(t.size(), a);
  }
  void shift_old_logprobs(double ratio) {
    for (auto& t : batch.trajectories) {
      for (auto& act : t.candidate.actions) act.logprob -= std::log(ratio);
    }
  }
  LossTerms loss() { return ppo_loss(state.model.encoder, state.model.policy, batch, studies, all, cfg); }
  double policy_grad_norm() {
    double s = 0.0;
    for (const auto& p : state.model.policy_parameters()) {
      for (double g : p.grad()) s += g * g;
    }
    return std::sqrt(s);
  }
  void zero_grads() {
    for (auto p : state.model.policy_parameters()) p.zero_grad();
    for (auto p : state.model.value_parameters()) p.zero_grad();
  }
};

}  // namespace

TEST(Normalize, SingleWinnerGroup) {
  RolloutBatch b;
  b.group_size = 4;
  for (double r : {1.0, 0.0, 0.0, 0.0}) b.trajectories.push_back(synthetic(3, r));
  PPOConfig cfg;
  cfg.kl_beta = 0.0;
  normalize_rewards(b, cfg);
  const double sd = std::sqrt(0.1875);
  const std::vector<double> want{0.75 / sd, -0.25 / sd, -0.25 / sd, -0.25 / sd};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(b.trajectories[i].normalized_reward, want[i], 1e-12);
    EXPECT_EQ(b.trajectories[i].rewards[0], 0.0);
    EXPECT_EQ(b.trajectories[i].rewards[1], 0.0);
    EXPECT_NEAR(b.trajectories[i].rewards[2], want[i], 1e-12);
  }
}

TEST(Normalize, ConstantGroupIsZeroAndGroupsSumToZero) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RolloutBatch b;
  b.group_size = 4;
  for (int i = 0; i < 4; ++i) b.trajectories.push_back(synthetic(2, 0.5));
  for (int i = 0; i < 12; ++i) b.trajectories.push_back(synthetic(2, u(rng)));
  PPOConfig cfg;
  normalize_rewards(b, cfg);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(b.trajectories[static_cast<std::size_t>(i)].normalized_reward, 0.0);
  for (std::size_t g = 0; g < 4; ++g) {
    double sum = 0.0;
    for (std::size_t i = 0; i < 4; ++i) sum += b.trajectories[4 * g + i].normalized_reward;
    EXPECT_NEAR(sum, 0.0, 1e-12);
  }
}

TEST(Normalize, AllEqualRewardsStayFinite) {
  RolloutBatch b;
  b.group_size = 2;
  for (int i = 0; i < 4; ++i) b.trajectories.push_back(synthetic(2, 1.0));
  normalize_rewards(b, PPOConfig{});
  for (const auto& t : b.trajectories) EXPECT_EQ(t.normalized_reward, 0.0);
}

TEST(Advantages, ZeroValuesGiveLambdaPowers) {
  RolloutBatch b;
  b.trajectories.push_back(synthetic(5, 1.0));
  compute_advantages(b, 1.0, 0.95, false);
  const auto& t = b.trajectories[0];
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(t.advantages[i], std::pow(0.95, 4.0 - static_cast<double>(i)), 1e-12);
    EXPECT_NEAR(t.returns[i], t.advantages[i], 1e-15);
  }
}

TEST(Advantages, LambdaZeroIsOneStepTD) {
  RolloutBatch b;
  b.trajectories.push_back(synthetic(4, 2.0, {0.3, -0.1, 0.7, 0.2}));
  b.trajectories[0].rewards = {0.1, -0.2, 0.0, 2.0};
  compute_advantages(b, 1.0, 0.0, false);
  const auto& t = b.trajectories[0];
  const std::vector<double> delta{0.1 - 0.1 - 0.3, -0.2 + 0.7 + 0.1, 0.0 + 0.2 - 0.7, 2.0 - 0.2};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(t.advantages[i], delta[i], 1e-12);
}

TEST(Advantages, PerfectValuesGiveZero) {
  RolloutBatch b;
  b.trajectories.push_back(synthetic(4, 1.5, {1.5, 1.5, 1.5, 1.5}));
  compute_advantages(b, 1.0, 0.95, false);
  for (double a : b.trajectories[0].advantages) EXPECT_NEAR(a, 0.0, 1e-15);
  for (double r : b.trajectories[0].returns) EXPECT_NEAR(r, 1.5, 1e-15);
}

TEST(Advantages, StandardizedToZeroMeanUnitVariance) {
  RolloutBatch b;
  b.trajectories.push_back(synthetic(3, 1.0));
  b.trajectories.push_back(synthetic(5, -0.5));
  compute_advantages(b, 1.0, 0.95, true);
  double s = 0.0, s2 = 0.0;
  for (const auto& t : b.trajectories) {
    for (double a : t.advantages) {
      s += a;
      s2 += a * a;
    }
  }
  EXPECT_NEAR(s / 8.0, 0.0, 1e-12);
  EXPECT_NEAR(s2 / 8.0, 1.0, 1e-12);
}

TEST(Rollouts, RewardsAreImpressionF1AndKLStartsAtZero) {
  Fixture f;
  ASSERT_EQ(f.batch.trajectories.size(), 4u);
  for (const auto& t : f.batch.trajectories) {
    const auto* s = f.studies[t.study];
    EXPECT_EQ(t.raw_reward, impression_reward(t.candidate.tokens, s->labels, fixture::small_vocab()));
    ASSERT_EQ(t.ref_logprobs.size(), t.size());
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(t.candidate.actions[i].logprob, t.ref_logprobs[i], 1e-10);
    for (double v : t.values) EXPECT_EQ(v, 0.0);
  }
}

TEST(Rollouts, BetaZeroShapesOnlyTheLastToken) {
  Fixture f;
  f.cfg.kl_beta = 0.0;
  normalize_rewards(f.batch, f.cfg);
  for (const auto& t : f.batch.trajectories) {
    for (std::size_t i = 0; i + 1 < t.size(); ++i) EXPECT_EQ(t.rewards[i], 0.0);
    EXPECT_EQ(t.rewards.back(), t.normalized_reward);
  }
}

TEST(Rollouts, RewardDependsOnlyOnTheImpression) {
  // Changing findings words never moves the reward; it is a function of the
  // impression span and the gold labels.
  Fixture f;
  const auto& v = fixture::small_vocab();
  for (const auto& t : f.batch.trajectories) {
    auto tokens = t.candidate.tokens;
    const auto boundary = std::find(tokens.begin(), tokens.end(), kImpression);
    for (auto it = tokens.begin() + 1; it != boundary; ++it) {
      if (*it != kNext) *it = static_cast<TokenId>(kNumReserved);
    }
    EXPECT_EQ(impression_reward(tokens, f.studies[t.study]->labels, v), t.raw_reward);
  }
}

TEST(PPOLoss, UnitRatioReturnsAdvantage) {
  Fixture f;
  f.set_advantages(2.0);
  const auto terms = f.loss();
  EXPECT_NEAR(terms.loss.item(), -2.0, 1e-9);
  EXPECT_NEAR(terms.mean_abs_ratio_dev, 0.0, 1e-9);
  EXPECT_EQ(terms.clipped, 0u);
}

TEST(PPOLoss, ClippedRatioHasNoGradient) {
  Fixture f;
  f.set_advantages(2.0);
  f.shift_old_logprobs(1.5);
  f.zero_grads();
  const auto terms = f.loss();
  EXPECT_NEAR(terms.loss.item(), -2.4, 1e-9);
  EXPECT_EQ(terms.clipped, terms.tokens);
  numerics::backward(terms.loss);
  EXPECT_EQ(f.policy_grad_norm(), 0.0);
}

TEST(PPOLoss, ClippingIsOneSided) {
  Fixture f;
  // Ratio above 1+eps with a negative advantage keeps the unclipped term.
  f.set_advantages(-2.0);
  f.shift_old_logprobs(1.5);
  f.zero_grads();
  auto terms = f.loss();
  EXPECT_NEAR(terms.loss.item(), 3.0, 1e-9);
  numerics::backward(terms.loss);
  EXPECT_GT(f.policy_grad_norm(), 0.0);

  // Ratio below 1-eps with a positive advantage keeps the unclipped term too.
  Fixture g;
  g.set_advantages(2.0);
  g.shift_old_logprobs(0.5);
  g.zero_grads();
  terms = g.loss();
  EXPECT_NEAR(terms.loss.item(), -1.0, 1e-9);
  numerics::backward(terms.loss);
  EXPECT_GT(g.policy_grad_norm(), 0.0);
}

TEST(PPOLoss, InactiveClipMatchesPlainSurrogate) {
  Fixture f;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  double expected = 0.0;
  std::size_t n = 0;
  for (auto& t : f.batch.trajectories) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double shift = u(rng);
      t.candidate.actions[i].logprob -= shift;
      expected += std::exp(shift) * t.advantages[i];
      ++n;
    }
  }
  EXPECT_NEAR(f.loss().loss.item(), -expected / static_cast<double>(n), 1e-8);
}

TEST(PPOLoss, GradientMatchesFiniteDifferences) {
  Fixture f;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto& t : f.batch.trajectories) {
    for (auto& a : t.candidate.actions) a.logprob -= u(rng);
  }
  const auto bias = f.state.model.policy.out_b;
  const double err = fixture::gradient_error([&] { return f.loss().loss; }, {bias});
  EXPECT_LT(err, 1e-3);
}

TEST(ValueLoss, ZeroHeadAgainstZeroAndUnitReturns) {
  Fixture f;
  for (auto& t : f.batch.trajectories) t.returns.assign(t.size(), 0.0);
  EXPECT_EQ(value_loss(f.state.model.encoder, f.state.model.value, f.batch, f.studies, f.all).item(), 0.0);
  for (auto& t : f.batch.trajectories) t.returns.assign(t.size(), 1.0);
  EXPECT_NEAR(value_loss(f.state.model.encoder, f.state.model.value, f.batch, f.studies, f.all).item(), 1.0, 1e-12);
}

TEST(ValueLoss, GradientMatchesFiniteDifferences) {
  Fixture f;
  auto params = f.state.model.value_parameters();
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto& p : params) {
    for (auto& x : p.mutable_data()) x += n(rng);
  }
  const auto head = params.back();
  const double err = fixture::gradient_error(
      [&] { return value_loss(f.state.model.encoder, f.state.model.value, f.batch, f.studies, f.all); }, {head});
  EXPECT_LT(err, 1e-3);
}

TEST(Schedule, LinearWarmupThenConstant) {
  PPOConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.learning_rate(0), 1e-6);
  EXPECT_NEAR(cfg.learning_rate(150), 5.5e-6, 1e-18);
  EXPECT_DOUBLE_EQ(cfg.learning_rate(300), 1e-5);
  EXPECT_DOUBLE_EQ(cfg.learning_rate(1274), 1e-5);
}

TEST(Config, RejectsBadValues) {
  PPOConfig cfg;
  cfg.clip_eps = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = PPOConfig{};
  cfg.group_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = PPOConfig{};
  cfg.lambda = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_NO_THROW(PPOConfig{}.validate());
}

TEST(TrainIteration, ZeroLearningRateLeavesParametersUntouched) {
  auto state = PPOState::from_pretrained(fixture::tiny_model(11));
  auto cfg = small_ppo();
  cfg.lr_start = cfg.lr_peak = 0.0;
  std::vector<std::vector<double>> before;
  for (const auto& [name, t] : state.model.named_parameters()) before.emplace_back(t.data().begin(), t.data().end());
  const auto& c = fixture::small_corpus();
  const auto m = train_iteration(state, c.train, c.val, fixture::small_vocab(), cfg, small_eval());
  EXPECT_FALSE(m.aborted);
  std::size_t i = 0;
  for (const auto& [name, t] : state.model.named_parameters()) {
    EXPECT_EQ(std::vector<double>(t.data().begin(), t.data().end()), before[i++]) << name;
  }
  EXPECT_EQ(state.iteration, 1u);
}

TEST(TrainIteration, StepsAreDeterministicAndMoveThePolicy) {
  const auto& c = fixture::small_corpus();
  auto run = [&] {
    auto state = PPOState::from_pretrained(fixture::tiny_model(11));
    std::vector<IterationMetrics> out;
    for (int i = 0; i < 2; ++i) out.push_back(train_iteration(state, c.train, c.val, fixture::small_vocab(), small_ppo(), small_eval()));
    return std::make_pair(out, state.model.policy.out_b.data()[5]);
  };
  const auto a = run();
  const auto b = run();
  ASSERT_EQ(a.first.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(a.first[i].mean_reward, b.first[i].mean_reward);
    EXPECT_EQ(a.first[i].val_impression_f1, b.first[i].val_impression_f1);
    EXPECT_EQ(a.first[i].mean_kl, b.first[i].mean_kl);
  }
  EXPECT_EQ(a.second, b.second);
  EXPECT_NE(a.second, fixture::tiny_model(11).policy.out_b.data()[5]);
}

TEST(TrainIteration, DivergenceGuardSkipsTheStep) {
  auto state = PPOState::from_pretrained(fixture::tiny_model(11));
  auto cfg = small_ppo();
  cfg.divergence_limit = -1.0;
  const auto before = state.model.policy.out_b.data()[5];
  const auto& c = fixture::small_corpus();
  const auto m = train_iteration(state, c.train, c.val, fixture::small_vocab(), cfg, small_eval());
  EXPECT_TRUE(m.aborted);
  EXPECT_NE(m.diagnostic.find("ratio"), std::string::npos);
  EXPECT_EQ(state.model.policy.out_b.data()[5], before);
}

TEST(Log, HeaderAndRowShape) {
  std::ostringstream out;
  write_ppo_log_header(out);
  IterationMetrics m;
  m.iter = 3;
  m.lr = 1e-5;
  write_ppo_log_row(out, m);
  EXPECT_EQ(out.str(), "iter,mean_reward,val_impression_f1,val_findings_f1,mean_kl,clip_frac,lr\n"
                       "3,0.000000,0.000000,0.000000,0.000000,0.000000,1.000e-05\n");
}
