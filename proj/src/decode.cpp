#include "clarifid/decode.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <random>

#include "clarifid/errors.hpp"
#include "clarifid/numerics/ops.hpp"
#include "clarifid/sampling.hpp"
#include "clarifid/synthdata.hpp"

namespace clarifid {

namespace {

double logsumexp(std::span<const double> logp, std::span<const TokenId> ids) {
  double mx = -INFINITY;
  for (auto id : ids) mx = std::max(mx, logp[static_cast<std::size_t>(id)]);
  if (std::isinf(mx)) return mx;
  double total = 0.0;
  for (auto id : ids) total += std::exp(logp[static_cast<std::size_t>(id)] - mx);
  return mx + std::log(total);
}

}  // namespace

void DecodeConfig::validate() const {
  if (candidates == 0) throw ConfigError("decode needs at least one candidate");
  if (!(t_find > 0.0) || !(t_imp > 0.0)) throw ConfigError("temperatures must be positive");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must lie in (0, 1]");
  if (max_len < k + 4) throw ConfigError("max_len leaves no room for k forced <next> tokens");
}

std::vector<TokenId> blocked_ids(Phase phase, bool forced) {
  if (phase == Phase::kImpression) return {kPad, kBos, kNext, kImpression};
  if (forced) return {kPad, kBos};
  return {kPad, kBos, kEos};
}

std::uint64_t candidate_seed(std::uint64_t seed, std::size_t j) { return derive_seed(seed, 0xB0B0 + j); }

Candidate generate_candidate(const PolicyNet& policy, const PackedStudyBatch& batch, const DecodeConfig& cfg,
                             std::uint64_t seed) {
  cfg.validate();
  if (batch.batch() != 1) throw ShapeError("generate_candidate takes a single-study batch");
  const std::size_t cap = std::min(cfg.max_len, policy.stack.max_len());
  std::mt19937_64 rng(seed);
  DecodeSession session(policy, batch);
  Candidate out;
  out.tokens.push_back(kBos);
  const numerics::Buffer* logits = &session.push(kBos);

  static constexpr std::array<TokenId, 3> kBoundary = {kNext, kEos, kImpression};
  const auto findings_blocked = blocked_ids(Phase::kFindings, cfg.force);
  const auto impression_blocked = blocked_ids(Phase::kImpression, cfg.force);
  Phase phase = Phase::kFindings;
  std::size_t n_next = 0;

  auto append = [&](TokenId tok) {
    out.tokens.push_back(tok);
    if (tok != kEos) logits = &session.push(tok);
  };

  while (true) {
    const std::size_t remaining = cap - out.tokens.size();
    if (phase == Phase::kFindings) {
      if (cfg.force && n_next >= cfg.k) {
        append(kImpression);
        phase = Phase::kImpression;
        continue;
      }
      const std::size_t required = cfg.force ? cfg.k - n_next + 2 : 2;
      if (remaining <= required) {
        // Out of room: close the findings deterministically.
        const TokenId tok = cfg.force ? kNext : kImpression;
        if (tok == kNext) ++n_next;
        else phase = Phase::kImpression;
        append(tok);
        continue;
      }
      const auto logp = masked_log_softmax(*logits, findings_blocked);
      TokenId tok = sample_next(*logits, cfg.t_find, cfg.top_p, findings_blocked, rng);
      Action a{out.tokens.size(), Phase::kFindings, {tok}, 0.0};
      if (cfg.force && (tok == kEos || tok == kImpression || tok == kNext)) {
        if (tok != kNext) ++out.replaced;
        tok = kNext;
        a.ids.assign(kBoundary.begin(), kBoundary.end());
      }
      a.logprob = logsumexp(logp, a.ids);
      out.actions.push_back(std::move(a));
      if (tok == kNext) ++n_next;
      if (tok == kImpression) phase = Phase::kImpression;
      append(tok);
    } else {
      if (remaining <= 1) {
        out.tokens.push_back(kEos);
        out.truncated = true;
        break;
      }
      const auto logp = masked_log_softmax(*logits, impression_blocked);
      const TokenId tok = sample_next(*logits, cfg.t_imp, cfg.top_p, impression_blocked, rng);
      out.actions.push_back({out.tokens.size(), Phase::kImpression, {tok}, logp[static_cast<std::size_t>(tok)]});
      append(tok);
      if (tok == kEos) break;
    }
  }
  return out;
}

double value_score(const ValueNet& value, const TokenSequence& tokens, const PackedStudyBatch& batch) {
  numerics::NoGradGuard guard;
  const auto v = value_forward(value, tokens, batch);
  return v.at(v.size() - 1);
}

BestOfN generate_report(const PolicyNet& policy, const CandidateScorer& scorer, const PackedStudyBatch& batch,
                        const DecodeConfig& cfg) {
  cfg.validate();
  BestOfN out;
  out.candidates.resize(cfg.candidates);
  if (cfg.parallel && cfg.candidates > 1) {
    std::vector<std::future<Candidate>> jobs;
    for (std::size_t j = 0; j < cfg.candidates; ++j) {
      jobs.push_back(std::async(std::launch::async, [&, j] {
        return generate_candidate(policy, batch, cfg, candidate_seed(cfg.seed, j));
      }));
    }
    for (std::size_t j = 0; j < cfg.candidates; ++j) out.candidates[j] = jobs[j].get();
  } else {
    for (std::size_t j = 0; j < cfg.candidates; ++j) {
      out.candidates[j] = generate_candidate(policy, batch, cfg, candidate_seed(cfg.seed, j));
    }
  }
  for (const auto& c : out.candidates) out.scores.push_back(scorer(c.tokens));
  for (std::size_t j = 1; j < out.scores.size(); ++j) {
    if (out.scores[j] > out.scores[out.chosen]) out.chosen = j;
  }
  out.tokens = out.candidates[out.chosen].tokens;
  return out;
}

BestOfN generate_report(const PolicyNet& policy, const ValueNet& value, const PackedStudyBatch& batch,
                        const DecodeConfig& cfg) {
  return generate_report(
      policy, [&](const TokenSequence& t) { return value_score(value, t, batch); }, batch, cfg);
}

}  // namespace clarifid
