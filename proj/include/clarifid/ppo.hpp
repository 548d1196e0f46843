#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clarifid/decode.hpp"
#include "clarifid/model.hpp"
#include "clarifid/numerics/adam.hpp"
#include "clarifid/synthdata.hpp"

namespace clarifid {

struct PPOConfig {
  double clip_eps = 0.2;
  double kl_beta = 0.05;
  std::size_t group_size = 4;        // rollouts per study
  double temperature = 1.0;
  double lr_start = 1e-6;
  double lr_peak = 1e-5;
  std::size_t warmup_iters = 300;
  std::size_t iterations = 1275;
  std::size_t batch_studies = 2;     // studies per micro-batch
  std::size_t accumulation = 128;    // micro-batches per optimizer step
  double gamma = 1.0;
  double lambda = 0.95;
  double value_weight = 0.5;
  double value_lr_scale = 1.0;       // step-size multiplier for value-net parameters
  bool group_normalize = true;       // off: plain batch z-scoring of raw rewards
  bool forced_rollouts = false;
  std::size_t forced_k = 10;
  std::size_t max_len = 128;
  std::size_t val_subset = 100;      // fixed validation studies scored each iteration
  double divergence_limit = 10.0;    // mean |ratio - 1| above this aborts the step
  std::uint64_t seed = 1;

  void validate() const;
  std::size_t studies_per_iteration() const { return batch_studies * accumulation; }
  /// Linear warmup from lr_start to lr_peak, then constant.
  double learning_rate(std::size_t iteration) const;
  DecodeConfig rollout_decode() const;
};

struct Trajectory {
  std::size_t study = 0;  // index into the iteration's study list
  Candidate candidate;
  std::vector<double> ref_logprobs;   // per action
  std::vector<double> values;         // V(s_t) per action
  double terminal_value = 0.0;        // value at the final token
  double raw_reward = 0.0;
  double normalized_reward = 0.0;
  std::vector<double> rewards;        // shaped, per action
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return candidate.actions.size(); }
};

struct RolloutBatch {
  std::vector<Trajectory> trajectories;
  std::size_t group_size = 1;
  std::size_t truncated = 0;

  std::size_t action_count() const;
};

/// Frozen pretraining snapshot used for the KL penalty.
struct Reference {
  ViewEncoder encoder;
  PolicyNet policy;

  static Reference snapshot(const Model& model) { return {model.encoder.clone(), model.policy.clone()}; }
};

/// Log-probs of every action of `candidates` under `policy` (graph-free).
std::vector<std::vector<double>> action_logprobs(const ViewEncoder& encoder, const PolicyNet& policy,
                                                 const StudyRecord& study, std::span<const Candidate> candidates,
                                                 bool forced);

/// G trajectories per study, with reference log-probs, values, raw rewards and
/// KL-shaped per-token rewards.
RolloutBatch collect_rollouts(const Model& model, const Reference& reference,
                              std::span<const StudyRecord* const> studies, const Vocabulary& vocab,
                              const PPOConfig& cfg, std::uint64_t seed);

/// Rebuilds shaped rewards from raw terminal rewards: group-centred and
/// divided by the global standard deviation (floor 1e-6).
void normalize_rewards(RolloutBatch& batch, const PPOConfig& cfg);

/// GAE with V(s_{T+1}) = 0; returns = Â + V. Advantages are standardized over
/// the batch when `standardize` is set.
void compute_advantages(RolloutBatch& batch, double gamma, double lambda, bool standardize = true);

struct LossTerms {
  Tensor loss;
  std::size_t tokens = 0;
  double mean_abs_ratio_dev = 0.0;
  std::size_t clipped = 0;
};

/// -mean over tokens of min(r·Â, clip(r, 1-ε, 1+ε)·Â) for the trajectories in `which`.
LossTerms ppo_loss(const ViewEncoder& encoder, const PolicyNet& policy, const RolloutBatch& batch,
                   std::span<const StudyRecord* const> studies, std::span<const std::size_t> which,
                   const PPOConfig& cfg);

/// Mean squared error of V against returns at every action state plus the
/// final position (target: the last action's return).
Tensor value_loss(const ViewEncoder& encoder, const ValueNet& value, const RolloutBatch& batch,
                  std::span<const StudyRecord* const> studies, std::span<const std::size_t> which);

struct IterationMetrics {
  std::size_t iter = 0;
  double mean_reward = 0.0;
  double val_impression_f1 = 0.0;
  double val_findings_f1 = 0.0;
  double mean_kl = 0.0;
  double clip_frac = 0.0;
  double lr = 0.0;
  bool aborted = false;
  std::string diagnostic;
};

struct PPOState {
  Model model;
  Reference reference;
  numerics::Adam optimizer;
  std::size_t iteration = 0;
  std::vector<std::size_t> order;  // train study order for the current pass
  std::size_t cursor = 0;

  /// Policy from the checkpoint; reference = frozen copy; value net re-seeded
  /// from the policy when `reinit_value` is set.
  static PPOState from_pretrained(const Model& pretrained, double value_lr_scale = 1.0, bool reinit_value = true);
};

/// Validation CE F1 used for the per-iteration log (unforced, single candidate).
std::pair<double, double> validation_f1(const Model& model, std::span<const StudyRecord> val,
                                        const Vocabulary& vocab, const DecodeConfig& cfg);

IterationMetrics train_iteration(PPOState& state, std::span<const StudyRecord> train,
                                 std::span<const StudyRecord> val, const Vocabulary& vocab, const PPOConfig& cfg,
                                 const DecodeConfig& eval_cfg);

void write_ppo_log_header(std::ostream& out);
void write_ppo_log_row(std::ostream& out, const IterationMetrics& m);

}  // namespace clarifid
