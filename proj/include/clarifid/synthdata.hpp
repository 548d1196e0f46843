#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "clarifid/labels.hpp"
#include "clarifid/tokenizer.hpp"

namespace clarifid {

inline constexpr std::size_t kMaxViews = 3;

/// Per-condition positive rates in label order (13 pathologies).
const std::array<double, kNumPathologies>& default_prevalence();

struct CorpusConfig {
  std::uint64_t seed = 1234;
  std::size_t train_studies = 2000;
  std::size_t val_studies = 200;
  std::size_t test_studies = 200;
  std::size_t tokens_per_view = 4;  // N
  std::size_t feature_dim = 16;     // D
  std::array<double, kNumPathologies> prevalence = default_prevalence();
  double sigma_view = 1.5;
  int template_version = 1;

  void validate() const;
};

/// One view: N visual tokens × D features, row-major.
struct FeatureGrid {
  std::size_t tokens = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  friend bool operator==(const FeatureGrid&, const FeatureGrid&) = default;
};

struct StudyRecord {
  std::string study_id;
  LabelVector labels;
  std::vector<FeatureGrid> views;
  Report report;
};

struct Corpus {
  std::vector<StudyRecord> train;
  std::vector<StudyRecord> val;
  std::vector<StudyRecord> test;
};

/// Fixed N×D projection W_c for each of the 14 conditions.
std::vector<FeatureGrid> condition_projections(const CorpusConfig& cfg);

/// Template report for a label vector. Every sentence it produces is labeled
/// back to exactly `labels` by the builtin rule table.
Report render_report(const LabelVector& labels, std::mt19937_64& rng);

/// Labels drawn from the prevalences, 1..3 views, grid = Σ_c y_c·W_c + noise.
StudyRecord generate_study(const CorpusConfig& cfg, const std::vector<FeatureGrid>& projections,
                           std::string study_id, std::uint64_t seed);

Corpus generate_corpus(const CorpusConfig& cfg);

/// Stateless 64-bit mix used to derive independent child seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

std::string study_to_json(const StudyRecord& study);
StudyRecord study_from_json(std::string_view line, std::size_t tokens_per_view = 0,
                            std::size_t feature_dim = 0);

void write_jsonl(const std::filesystem::path& path, std::span<const StudyRecord> studies);
/// Reads a corpus file. When N and D are nonzero every grid must match them.
std::vector<StudyRecord> read_jsonl(const std::filesystem::path& path, std::size_t tokens_per_view = 0,
                                    std::size_t feature_dim = 0);

Vocabulary build_vocabulary(std::span<const StudyRecord> studies);

/// Reports of a study list, in order.
std::vector<Report> reports_of(std::span<const StudyRecord> studies);

}  // namespace clarifid
