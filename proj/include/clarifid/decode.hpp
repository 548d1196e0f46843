#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "clarifid/model.hpp"

namespace clarifid {

struct DecodeConfig {
  std::size_t k = 10;           // required <next> tokens before the impression
  std::size_t candidates = 8;   // N for best-of-N
  double t_find = 1.0;
  double t_imp = 0.8;
  double top_p = 0.9;
  std::size_t max_len = 128;
  /// Off: the findings phase runs unforced and the policy emits <impression>
  /// itself (<eos> stays blocked until then).
  bool force = true;
  bool parallel = false;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Phase : std::uint8_t { kFindings, kImpression };

/// One sampled decision: the token at `position` drawn from the logits of
/// position - 1. A forced phase maps any of <next>/<eos>/<impression> to
/// <next>, so the effective action there is the whole set.
struct Action {
  std::size_t position = 0;
  Phase phase = Phase::kFindings;
  std::vector<TokenId> ids;
  double logprob = 0.0;  // under the untempered, blocked policy distribution
};

struct Candidate {
  TokenSequence tokens;
  std::vector<Action> actions;
  bool truncated = false;
  std::size_t replaced = 0;  // premature <eos>/<impression> turned into <next>
};

/// Ids blocked in a phase. Findings blocks <eos> only in unforced mode.
std::vector<TokenId> blocked_ids(Phase phase, bool forced);

/// Algorithm 1 for a single-study batch: forced findings, appended
/// <impression>, tempered impression until <eos> or the length cap.
Candidate generate_candidate(const PolicyNet& policy, const PackedStudyBatch& batch, const DecodeConfig& cfg,
                             std::uint64_t seed);

using CandidateScorer = std::function<double(const TokenSequence&)>;

struct BestOfN {
  TokenSequence tokens;
  std::size_t chosen = 0;
  std::vector<double> scores;
  std::vector<Candidate> candidates;
};

/// Final-position value of a full sequence.
double value_score(const ValueNet& value, const TokenSequence& tokens, const PackedStudyBatch& batch);

/// N candidates under derived seeds, returns the highest scored (lowest index on ties).
BestOfN generate_report(const PolicyNet& policy, const CandidateScorer& scorer, const PackedStudyBatch& batch,
                        const DecodeConfig& cfg);
BestOfN generate_report(const PolicyNet& policy, const ValueNet& value, const PackedStudyBatch& batch,
                        const DecodeConfig& cfg);

/// Seed of candidate j.
std::uint64_t candidate_seed(std::uint64_t seed, std::size_t j);

}  // namespace clarifid
