#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "clarifid/decode.hpp"
#include "clarifid/reward.hpp"
#include "clarifid/synthdata.hpp"

namespace clarifid {

enum class Section { kFindings, kImpression, kFull };

Section parse_section(std::string_view name);
std::string_view section_name(Section s);

/// Words of one section; findings sentences are each closed with ".".
Words section_words(const Report& report, Section section);
LabelVector section_labels(const Report& report, Section section, const RuleTable& rules = RuleTable::builtin());

struct CEBlock {
  PrecisionRecall micro;
  double macro_f1 = 0.0;
  std::array<PrecisionRecall, kNumConditions> per_class{};
};

CEBlock ce_from_labels(std::span<const LabelVector> predicted, std::span<const LabelVector> gold);
CEBlock ce_metrics(std::span<const Report> generated, std::span<const LabelVector> gold, Section section,
                   const RuleTable& rules = RuleTable::builtin());

/// Corpus BLEU over orders 1..max_n with pooled clipped counts and brevity penalty.
double bleu(std::span<const Words> hypotheses, std::span<const Words> references, int max_n);
/// Mean per-pair ROUGE-L F (β = 1).
double rouge_l(std::span<const Words> hypotheses, std::span<const Words> references);

struct SectionMetrics {
  CEBlock ce;
  double bleu1 = 0.0;
  double bleu4 = 0.0;
  double rouge_l = 0.0;
};

struct MetricsReport {
  SectionMetrics findings;
  SectionMetrics impression;
  SectionMetrics full;
  std::size_t corpus_size = 0;

  const SectionMetrics& section(Section s) const;
  SectionMetrics& section(Section s);
};

MetricsReport compute_metrics(std::span<const Report> generated, std::span<const StudyRecord> gold);

/// Single-study packed batch from the model's encoder, graph-free.
PackedStudyBatch encode_study(const ViewEncoder& encoder, const StudyRecord& study);

struct GeneratedReport {
  TokenSequence tokens;
  Report report;
  DecodeDiagnostics diagnostics;
  std::vector<double> scores;
  std::size_t chosen = 0;
};

/// generate_report per study; study i decodes under seed derive_seed(cfg.seed, i).
std::vector<GeneratedReport> generate_reports(const Model& model, std::span<const StudyRecord> studies,
                                              const Vocabulary& vocab, const DecodeConfig& cfg);

MetricsReport evaluate_corpus(const Model& model, std::span<const StudyRecord> studies, const Vocabulary& vocab,
                              const DecodeConfig& cfg);

/// Columns section, metric, value.
void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report);
/// Columns condition, P, R, F1 for one section.
void write_per_class_csv(const std::filesystem::path& path, const CEBlock& block);

struct SweepRow {
  std::size_t k = 0;
  double findings_f1 = 0.0;
  double impression_f1 = 0.0;
};

/// Forced decoding with a single candidate for each k.
std::vector<SweepRow> sweep_forcing(const Model& model, std::span<const StudyRecord> studies,
                                    const Vocabulary& vocab, std::span<const std::size_t> ks, DecodeConfig cfg);
void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows);

struct TemperatureRow {
  double t_find = 0.0;
  double t_imp = 0.0;
  double findings_f1 = 0.0;
  double impression_f1 = 0.0;
};

const std::vector<std::pair<double, double>>& default_temperature_grid();
std::vector<TemperatureRow> sweep_temperature(const Model& model, std::span<const StudyRecord> studies,
                                              const Vocabulary& vocab,
                                              std::span<const std::pair<double, double>> grid, DecodeConfig cfg);
void write_temperature_csv(const std::filesystem::path& path, std::span<const TemperatureRow> rows);

struct AblationRow {
  std::string name;
  MetricsReport metrics;
};

/// SL (pretrained, unforced, N=1), +RL (PPO policy, unforced, N=1),
/// +FG (forced with cfg.k, N=1), +BoN (forced, cfg.candidates).
std::vector<AblationRow> run_ablation(const Model& pretrained, const Model& tuned,
                                      std::span<const StudyRecord> studies, const Vocabulary& vocab,
                                      const DecodeConfig& cfg);
/// Columns row, findings_f1, impression_f1, full_f1, bleu1, bleu4, rouge_l.
void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationRow> rows);

/// Fixed-precision rendering used by every CSV writer.
std::string format_number(double v);

}  // namespace clarifid
