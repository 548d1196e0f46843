#include "clarifid/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "clarifid/errors.hpp"
#include "clarifid/eval.hpp"
#include "clarifid/numerics/ops.hpp"
#include "clarifid/reward.hpp"

namespace clarifid {

namespace ops = numerics;

void PPOConfig::validate() const {
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("clip epsilon must lie in (0,1)");
  if (group_size == 0) throw ConfigError("group size must be at least 1");
  if (!(temperature > 0.0)) throw ConfigError("rollout temperature must be positive");
  if (!(lr_start >= 0.0) || !(lr_peak >= 0.0)) throw ConfigError("learning rates must be non-negative");
  if (batch_studies == 0 || accumulation == 0) throw ConfigError("batch size and accumulation must be positive");
  if (!(lambda >= 0.0 && lambda <= 1.0) || !(gamma >= 0.0 && gamma <= 1.0)) {
    throw ConfigError("gamma and lambda must lie in [0,1]");
  }
  if (!(value_lr_scale > 0.0)) throw ConfigError("value_lr_scale must be positive");
  if (!(kl_beta >= 0.0) || !(value_weight >= 0.0)) throw ConfigError("kl_beta and value_weight must be non-negative");
  rollout_decode().validate();
}

double PPOConfig::learning_rate(std::size_t iteration) const {
  if (warmup_iters == 0 || iteration >= warmup_iters) return lr_peak;
  const double frac = static_cast<double>(iteration) / static_cast<double>(warmup_iters);
  return lr_start + (lr_peak - lr_start) * frac;
}

DecodeConfig PPOConfig::rollout_decode() const {
  DecodeConfig d;
  d.k = forced_k;
  d.candidates = 1;
  d.t_find = temperature;
  d.t_imp = temperature;
  d.top_p = 1.0;
  d.max_len = max_len;
  d.force = forced_rollouts;
  return d;
}

std::size_t RolloutBatch::action_count() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.size();
  return n;
}

namespace {

// Padded token rows for a set of candidates plus the rows/sets/masks needed to
// read their action log-probs and state values out of a batched forward.
struct ForwardPlan {
  std::vector<TokenId> ids;
  std::size_t rows = 0;
  std::size_t length = 0;
  std::vector<std::size_t> action_rows;   // logits row predicting each action
  std::vector<std::vector<int>> sets;
  std::vector<double> mask;               // [actions × V]
  std::vector<std::size_t> terminal_rows; // final position of each row
};

ForwardPlan plan_forward(std::span<const Candidate* const> candidates, std::size_t vocab, bool forced) {
  ForwardPlan plan;
  plan.rows = candidates.size();
  for (const auto* c : candidates) plan.length = std::max(plan.length, c->tokens.size());
  plan.ids.assign(plan.rows * plan.length, kPad);
  const auto findings_blocked = blocked_ids(Phase::kFindings, forced);
  const auto impression_blocked = blocked_ids(Phase::kImpression, forced);
  for (std::size_t r = 0; r < plan.rows; ++r) {
    const auto& c = *candidates[r];
    std::copy(c.tokens.begin(), c.tokens.end(), plan.ids.begin() + static_cast<std::ptrdiff_t>(r * plan.length));
    for (const auto& a : c.actions) {
      plan.action_rows.push_back(r * plan.length + a.position - 1);
      plan.sets.emplace_back(a.ids.begin(), a.ids.end());
      std::vector<double> row(vocab, 1.0);
      for (auto id : a.phase == Phase::kFindings ? findings_blocked : impression_blocked) {
        row[static_cast<std::size_t>(id)] = 0.0;
      }
      plan.mask.insert(plan.mask.end(), row.begin(), row.end());
    }
    plan.terminal_rows.push_back(r * plan.length + c.tokens.size() - 1);
  }
  return plan;
}

Tensor planned_logprobs(const PolicyNet& policy, const PackedStudyBatch& packed, const ForwardPlan& plan) {
  const auto logits = policy.forward(plan.ids, plan.rows, packed);
  const auto picked = ops::gather_rows(logits, plan.action_rows);
  const auto mask = Tensor::from({plan.action_rows.size(), logits.dim(1)}, plan.mask);
  return ops::gather_logsumexp(ops::log_softmax_rows(picked, mask), plan.sets);
}

PackedStudyBatch detached(const PackedStudyBatch& b) {
  PackedStudyBatch out = b;
  out.s_hat = b.s_hat.detach();
  return out;
}

std::vector<const StudyRecord*> row_studies(const RolloutBatch& batch, std::span<const StudyRecord* const> studies,
                                            std::span<const std::size_t> which) {
  std::vector<const StudyRecord*> out;
  for (auto i : which) out.push_back(studies[batch.trajectories[i].study]);
  return out;
}

std::vector<const Candidate*> row_candidates(const RolloutBatch& batch, std::span<const std::size_t> which) {
  std::vector<const Candidate*> out;
  for (auto i : which) out.push_back(&batch.trajectories[i].candidate);
  return out;
}

void rebuild_shaped(Trajectory& t, double beta, double terminal) {
  t.rewards.assign(t.size(), 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t.rewards[i] = -beta * (t.candidate.actions[i].logprob - t.ref_logprobs[i]);
  }
  if (!t.rewards.empty()) t.rewards.back() += terminal;
}

}  // namespace

std::vector<std::vector<double>> action_logprobs(const ViewEncoder& encoder, const PolicyNet& policy,
                                                 const StudyRecord& study, std::span<const Candidate> candidates,
                                                 bool forced) {
  ops::NoGradGuard guard;
  std::vector<const Candidate*> rows;
  std::vector<const StudyRecord*> studies;
  for (const auto& c : candidates) {
    rows.push_back(&c);
    studies.push_back(&study);
  }
  const auto plan = plan_forward(rows, policy.stack.vocab_size(), forced);
  const auto packed = encode_studies(encoder, studies);
  const auto lp = planned_logprobs(policy, packed, plan);
  std::vector<std::vector<double>> out;
  std::size_t k = 0;
  for (const auto& c : candidates) {
    out.emplace_back(lp.data().begin() + static_cast<std::ptrdiff_t>(k),
                     lp.data().begin() + static_cast<std::ptrdiff_t>(k + c.actions.size()));
    k += c.actions.size();
  }
  return out;
}

RolloutBatch collect_rollouts(const Model& model, const Reference& reference,
                              std::span<const StudyRecord* const> studies, const Vocabulary& vocab,
                              const PPOConfig& cfg, std::uint64_t seed) {
  ops::NoGradGuard guard;
  const auto decode = cfg.rollout_decode();
  RolloutBatch batch;
  batch.group_size = cfg.group_size;
  for (std::size_t s = 0; s < studies.size(); ++s) {
    const auto packed = encode_study(model.encoder, *studies[s]);
    std::vector<Candidate> group;
    for (std::size_t g = 0; g < cfg.group_size; ++g) {
      group.push_back(generate_candidate(model.policy, packed, decode, derive_seed(seed, s * cfg.group_size + g)));
    }
    const auto ref = action_logprobs(reference.encoder, reference.policy, *studies[s], group, decode.force);

    std::vector<const Candidate*> rows;
    for (const auto& c : group) rows.push_back(&c);
    const auto plan = plan_forward(rows, model.policy.stack.vocab_size(), decode.force);
    std::vector<const StudyRecord*> repeated(group.size(), studies[s]);
    const auto values = model.value.forward(plan.ids, plan.rows, encode_studies(model.encoder, repeated));
    const auto v = values.data();

    std::size_t action = 0;
    for (std::size_t g = 0; g < group.size(); ++g) {
      Trajectory t;
      t.study = s;
      t.candidate = std::move(group[g]);
      t.ref_logprobs = ref[g];
      for (std::size_t i = 0; i < t.size(); ++i, ++action) t.values.push_back(v[plan.action_rows[action]]);
      t.terminal_value = v[plan.terminal_rows[g]];
      t.raw_reward = impression_reward(t.candidate.tokens, studies[s]->labels, vocab);
      t.normalized_reward = t.raw_reward;
      rebuild_shaped(t, cfg.kl_beta, t.raw_reward);
      batch.truncated += t.candidate.truncated;
      batch.trajectories.push_back(std::move(t));
    }
  }
  return batch;
}

void normalize_rewards(RolloutBatch& batch, const PPOConfig& cfg) {
  auto& ts = batch.trajectories;
  if (ts.empty()) return;
  double mean = 0.0;
  for (const auto& t : ts) mean += t.raw_reward;
  mean /= static_cast<double>(ts.size());
  double var = 0.0;
  for (const auto& t : ts) var += (t.raw_reward - mean) * (t.raw_reward - mean);
  const double sd = std::max(std::sqrt(var / static_cast<double>(ts.size())), 1e-6);

  const std::size_t g = cfg.group_normalize ? std::max<std::size_t>(batch.group_size, 1) : ts.size();
  for (std::size_t first = 0; first < ts.size(); first += g) {
    const auto last = std::min(ts.size(), first + g);
    double centre = 0.0;
    for (auto i = first; i < last; ++i) centre += ts[i].raw_reward;
    centre /= static_cast<double>(last - first);
    for (auto i = first; i < last; ++i) {
      ts[i].normalized_reward = (ts[i].raw_reward - centre) / sd;
      rebuild_shaped(ts[i], cfg.kl_beta, ts[i].normalized_reward);
    }
  }
}

void compute_advantages(RolloutBatch& batch, double gamma, double lambda, bool standardize) {
  std::size_t n = 0;
  double sum = 0.0;
  for (auto& t : batch.trajectories) {
    const auto len = t.size();
    t.advantages.assign(len, 0.0);
    t.returns.assign(len, 0.0);
    double running = 0.0;
    for (std::size_t i = len; i-- > 0;) {
      const double next_value = i + 1 < len ? t.values[i + 1] : 0.0;
      const double delta = t.rewards[i] + gamma * next_value - t.values[i];
      running = delta + gamma * lambda * running;
      t.advantages[i] = running;
      t.returns[i] = running + t.values[i];
    }
    for (double a : t.advantages) sum += a;
    n += len;
  }
  if (!standardize || n == 0) return;
  const double mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (const auto& t : batch.trajectories) {
    for (double a : t.advantages) var += (a - mean) * (a - mean);
  }
  const double sd = std::max(std::sqrt(var / static_cast<double>(n)), 1e-8);
  for (auto& t : batch.trajectories) {
    for (auto& a : t.advantages) a = (a - mean) / sd;
  }
}

LossTerms ppo_loss(const ViewEncoder& encoder, const PolicyNet& policy, const RolloutBatch& batch,
                   std::span<const StudyRecord* const> studies, std::span<const std::size_t> which,
                   const PPOConfig& cfg) {
  const auto candidates = row_candidates(batch, which);
  const auto plan = plan_forward(candidates, policy.stack.vocab_size(), cfg.forced_rollouts);
  if (plan.action_rows.empty()) throw EmptyLossError("ppo_loss: no actions in the selected trajectories");
  const auto packed = encode_studies(encoder, row_studies(batch, studies, which));
  const auto logp = planned_logprobs(policy, packed, plan);

  std::vector<double> old_lp, adv;
  for (auto i : which) {
    const auto& t = batch.trajectories[i];
    for (std::size_t a = 0; a < t.size(); ++a) {
      old_lp.push_back(t.candidate.actions[a].logprob);
      adv.push_back(t.advantages[a]);
    }
  }
  const auto n = old_lp.size();
  const auto advantages = Tensor::from({n}, adv);
  const auto ratio = ops::exp(ops::sub(logp, Tensor::from({n}, old_lp)));
  const auto unclipped = ops::mul(ratio, advantages);
  const auto clipped = ops::mul(ops::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), advantages);
  LossTerms out;
  out.loss = ops::scale(ops::mean(ops::minimum(unclipped, clipped)), -1.0);
  out.tokens = n;
  double dev = 0.0;
  for (double r : ratio.data()) {
    dev += std::abs(r - 1.0);
    out.clipped += r < 1.0 - cfg.clip_eps || r > 1.0 + cfg.clip_eps;
  }
  out.mean_abs_ratio_dev = dev / static_cast<double>(n);
  return out;
}

Tensor value_loss(const ViewEncoder& encoder, const ValueNet& value, const RolloutBatch& batch,
                  std::span<const StudyRecord* const> studies, std::span<const std::size_t> which) {
  const auto candidates = row_candidates(batch, which);
  const auto plan = plan_forward(candidates, value.stack.vocab_size(), false);
  const auto packed = detached(encode_studies(encoder, row_studies(batch, studies, which)));
  const auto v = value.forward(plan.ids, plan.rows, packed);
  std::vector<std::size_t> rows;
  std::vector<double> targets;
  std::size_t a = 0;
  for (std::size_t r = 0; r < which.size(); ++r) {
    const auto& t = batch.trajectories[which[r]];
    for (std::size_t i = 0; i < t.size(); ++i, ++a) {
      rows.push_back(plan.action_rows[a]);
      targets.push_back(t.returns[i]);
    }
    rows.push_back(plan.terminal_rows[r]);
    targets.push_back(t.returns.empty() ? t.normalized_reward : t.returns.back());
  }
  const auto picked = ops::gather_rows(ops::reshape(v, {v.size(), 1}), rows);
  const auto diff = ops::sub(picked, Tensor::from({rows.size(), 1}, targets));
  return ops::mean(ops::mul(diff, diff));
}

PPOState PPOState::from_pretrained(const Model& pretrained, double value_lr_scale, bool reinit_value) {
  Model model = pretrained.clone();
  if (reinit_value) model.value = ValueNet::from_policy(model.policy, model.config.value_layers);
  auto params = model.policy_parameters();
  std::vector<double> scale(params.size(), 1.0);
  for (auto& p : model.value_parameters()) {
    params.push_back(p);
    scale.push_back(value_lr_scale);
  }
  for (auto& p : params) p.set_requires_grad(true);
  return PPOState{model, Reference::snapshot(pretrained), numerics::Adam(params, scale), 0, {}, 0};
}

std::pair<double, double> validation_f1(const Model& model, std::span<const StudyRecord> val,
                                        const Vocabulary& vocab, const DecodeConfig& cfg) {
  const auto m = evaluate_corpus(model, val, vocab, cfg);
  return {m.impression.ce.micro.f1, m.findings.ce.micro.f1};
}

IterationMetrics train_iteration(PPOState& state, std::span<const StudyRecord> train,
                                 std::span<const StudyRecord> val, const Vocabulary& vocab, const PPOConfig& cfg,
                                 const DecodeConfig& eval_cfg) {
  cfg.validate();
  if (train.empty()) throw DataError("PPO needs training studies");
  IterationMetrics m;
  m.iter = state.iteration;
  m.lr = cfg.learning_rate(state.iteration);

  std::vector<const StudyRecord*> studies;
  while (studies.size() < cfg.studies_per_iteration()) {
    if (state.cursor >= state.order.size()) {
      state.order.resize(train.size());
      std::iota(state.order.begin(), state.order.end(), 0);
      std::mt19937_64 rng(derive_seed(cfg.seed, 0x5EED00 + state.iteration));
      std::shuffle(state.order.begin(), state.order.end(), rng);
      state.cursor = 0;
    }
    studies.push_back(&train[state.order[state.cursor++]]);
  }

  auto batch = collect_rollouts(state.model, state.reference, studies, vocab, cfg,
                                derive_seed(cfg.seed, state.iteration));
  normalize_rewards(batch, cfg);
  compute_advantages(batch, cfg.gamma, cfg.lambda);

  const auto total_tokens = static_cast<double>(batch.action_count());
  double reward_sum = 0.0, kl_sum = 0.0, dev_sum = 0.0;
  std::size_t clipped = 0;
  for (const auto& t : batch.trajectories) {
    reward_sum += t.raw_reward;
    for (std::size_t i = 0; i < t.size(); ++i) kl_sum += t.candidate.actions[i].logprob - t.ref_logprobs[i];
  }
  m.mean_reward = reward_sum / static_cast<double>(batch.trajectories.size());
  m.mean_kl = total_tokens > 0 ? kl_sum / total_tokens : 0.0;

  const std::size_t per_micro = cfg.batch_studies * cfg.group_size;
  for (std::size_t first = 0; first < batch.trajectories.size(); first += per_micro) {
    std::vector<std::size_t> which;
    for (auto i = first; i < std::min(batch.trajectories.size(), first + per_micro); ++i) {
      if (batch.trajectories[i].size() > 0) which.push_back(i);
    }
    if (which.empty()) continue;
    auto terms = ppo_loss(state.model.encoder, state.model.policy, batch, studies, which, cfg);
    const auto vloss = value_loss(state.model.encoder, state.model.value, batch, studies, which);
    const auto loss = ops::add(terms.loss, ops::scale(vloss, cfg.value_weight));
    ops::backward(loss);
    state.optimizer.accumulate(static_cast<double>(terms.tokens) / total_tokens);
    dev_sum += terms.mean_abs_ratio_dev * static_cast<double>(terms.tokens);
    clipped += terms.clipped;
  }
  m.clip_frac = total_tokens > 0 ? static_cast<double>(clipped) / total_tokens : 0.0;
  const double mean_dev = total_tokens > 0 ? dev_sum / total_tokens : 0.0;
  if (mean_dev > cfg.divergence_limit) {
    state.optimizer.discard();
    m.aborted = true;
    char buf[128];
    std::snprintf(buf, sizeof buf, "mean |ratio - 1| = %.3g exceeds %.3g; step skipped", mean_dev,
                  cfg.divergence_limit);
    m.diagnostic = buf;
  } else {
    state.optimizer.step(m.lr);
  }
  ++state.iteration;

  const auto subset = val.subspan(0, std::min(val.size(), cfg.val_subset));
  if (!subset.empty()) std::tie(m.val_impression_f1, m.val_findings_f1) = validation_f1(state.model, subset, vocab, eval_cfg);
  return m;
}

void write_ppo_log_header(std::ostream& out) { out << "iter,mean_reward,val_impression_f1,val_findings_f1,mean_kl,clip_frac,lr\n"; }

void write_ppo_log_row(std::ostream& out, const IterationMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.3e\n", m.iter, m.mean_reward, m.val_impression_f1,
                m.val_findings_f1, m.mean_kl, m.clip_frac, m.lr);
  out << buf;
}

}  // namespace clarifid
