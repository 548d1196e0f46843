#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "clarifid/model.hpp"
#include "clarifid/numerics/adam.hpp"
#include "clarifid/synthdata.hpp"

namespace clarifid {

struct PretrainConfig {
  double lr = 1e-4;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  bool shuffle_sentences = true;
  double noise_sigma = 0.15;  // feature-noise augmentation, 0.1 x sigma_view
  std::uint64_t seed = 1;

  void validate() const;
};

/// Teacher-forcing rows: inputs and shifted targets, right-padded with <pad>.
struct TeacherBatch {
  std::vector<TokenId> inputs;
  std::vector<TokenId> targets;
  std::size_t rows = 0;
  std::size_t length = 0;
};

TeacherBatch make_teacher_batch(std::span<const TokenSequence> sequences);

/// Findings sentences in a uniformly random order; impression untouched.
Report shuffle_findings(const Report& report, std::mt19937_64& rng);

struct LossStats {
  double loss = 0.0;       // mean CE per target token
  std::size_t tokens = 0;  // non-pad targets
  std::size_t correct = 0; // argmax hits
  double accuracy() const { return tokens ? static_cast<double>(correct) / static_cast<double>(tokens) : 0.0; }
};

/// Forward + backward on one batch and an Adam step over encoder and policy.
LossStats pretrain_step(Model& model, numerics::Adam& optimizer, std::span<const StudyRecord* const> batch,
                        const Vocabulary& vocab, const PretrainConfig& cfg, std::mt19937_64& rng);

/// Teacher-forced CE and accuracy without augmentation or gradients.
LossStats evaluate_loss(const Model& model, std::span<const StudyRecord> studies, const Vocabulary& vocab,
                        std::size_t batch_size = 32);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct PretrainResult {
  Model best;
  std::size_t best_epoch = 0;
  std::vector<EpochLog> log;
};

/// Epoch loop with validation after each epoch; keeps the lowest-validation
/// model, whose value net is re-seeded from its policy.
PretrainResult run_pretraining(const Model& init, std::span<const StudyRecord> train,
                               std::span<const StudyRecord> val, const Vocabulary& vocab,
                               const PretrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {});

void write_pretrain_log(const std::filesystem::path& path, std::span<const EpochLog> log);

}  // namespace clarifid
