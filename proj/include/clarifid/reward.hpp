#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clarifid/labels.hpp"
#include "clarifid/tokenizer.hpp"

namespace clarifid {

using Sentences = std::vector<Words>;

struct ConditionRule {
  std::size_t condition = 0;
  std::vector<Words> patterns;
  std::vector<Words> negation_cues;

  friend bool operator==(const ConditionRule&, const ConditionRule&) = default;
};

/// Keyword rules for the 13 pathology labels. "No Finding" has no row; it is
/// derived from the others.
class RuleTable {
 public:
  /// Rules shipped with the library (identical to data/rules_v1.tsv).
  static const RuleTable& builtin();
  /// Tab-separated rows: condition, ';'-separated patterns, ';'-separated cues.
  /// Lines starting with '#' are comments.
  static RuleTable parse(std::string_view text);
  static RuleTable load(const std::filesystem::path& path);

  const std::vector<ConditionRule>& rules() const { return rules_; }
  std::string serialize() const;

  friend bool operator==(const RuleTable&, const RuleTable&) = default;

 private:
  std::vector<ConditionRule> rules_;
};

/// Text of the shipped rule table file.
std::string_view builtin_rule_text();

/// Splits a word list into sentences on "." tokens, dropping empty ones.
Sentences split_sentences(std::span<const std::string> words);

/// A condition is positive when some sentence contains one of its patterns
/// with no negation cue earlier in that sentence.
LabelVector extract_labels(std::span<const Words> sentences,
                           const RuleTable& rules = RuleTable::builtin());

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

/// P/R/F1 from pooled counts. Zero denominators give 0, except when there is
/// nothing to find and nothing predicted, which counts as full agreement.
PrecisionRecall prf_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

/// Micro-averaged P/R/F1 pooled over every (study, condition) pair.
PrecisionRecall micro_f1(std::span<const LabelVector> predicted, std::span<const LabelVector> gold);

/// Labels read from the impression span of a generated sequence.
LabelVector impression_labels(std::span<const TokenId> generated, const Vocabulary& vocab,
                              const RuleTable& rules = RuleTable::builtin());

/// Single-study micro F1 of the generated impression against gold labels.
double impression_reward(std::span<const TokenId> generated, const LabelVector& gold,
                         const Vocabulary& vocab, const RuleTable& rules = RuleTable::builtin());

}  // namespace clarifid
