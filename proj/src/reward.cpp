#include "clarifid/reward.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "clarifid/errors.hpp"

namespace clarifid {

namespace {

constexpr std::string_view kRuleText =
#include "rules_v1.inc"
    ;

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> parts;
  std::string current;
  for (char c : text) {
    if (c == sep) {
      parts.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  parts.push_back(std::move(current));
  return parts;
}

std::vector<Words> parse_phrases(std::string_view field) {
  std::vector<Words> phrases;
  for (const auto& part : split(field, ';')) {
    auto words = tokenize_text(part);
    if (!words.empty()) phrases.push_back(std::move(words));
  }
  return phrases;
}

std::string join_phrases(const std::vector<Words>& phrases) {
  std::string out;
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    if (i) out.push_back(';');
    out += join_words(phrases[i]);
  }
  return out;
}

// Start positions of every occurrence of `phrase` in `sentence`.
std::vector<std::size_t> occurrences(std::span<const std::string> sentence, const Words& phrase) {
  std::vector<std::size_t> hits;
  if (phrase.size() > sentence.size()) return hits;
  for (std::size_t i = 0; i + phrase.size() <= sentence.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < phrase.size() && match; ++j) match = sentence[i + j] == phrase[j];
    if (match) hits.push_back(i);
  }
  return hits;
}

bool sentence_asserts(std::span<const std::string> sentence, const ConditionRule& rule) {
  // Earliest position where some negation cue has fully appeared.
  std::size_t negated_from = sentence.size() + 1;
  for (const auto& cue : rule.negation_cues) {
    const auto hits = occurrences(sentence, cue);
    if (!hits.empty()) negated_from = std::min(negated_from, hits.front() + cue.size());
  }
  for (const auto& pattern : rule.patterns) {
    for (auto start : occurrences(sentence, pattern)) {
      if (start < negated_from) return true;
    }
  }
  return false;
}

}  // namespace

std::string_view builtin_rule_text() { return kRuleText; }

const RuleTable& RuleTable::builtin() {
  static const RuleTable table = parse(kRuleText);
  return table;
}

RuleTable RuleTable::parse(std::string_view text) {
  RuleTable table;
  std::vector<bool> seen(kNumPathologies, false);
  std::size_t line_no = 0;
  for (const auto& line : split(text, '\n')) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 3) {
      throw ConfigError("rule table line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
    }
    ConditionRule rule;
    rule.condition = condition_index(fields[0]);
    if (rule.condition >= kNumPathologies) {
      throw ConfigError("rule table line " + std::to_string(line_no) + ": No Finding is derived, not matched");
    }
    if (seen[rule.condition]) {
      throw ConfigError("rule table line " + std::to_string(line_no) + ": duplicate condition " + fields[0]);
    }
    seen[rule.condition] = true;
    rule.patterns = parse_phrases(fields[1]);
    rule.negation_cues = parse_phrases(fields[2]);
    if (rule.patterns.empty()) {
      throw ConfigError("rule table line " + std::to_string(line_no) + ": no patterns for " + fields[0]);
    }
    table.rules_.push_back(std::move(rule));
  }
  return table;
}

RuleTable RuleTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open rule table " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::string RuleTable::serialize() const {
  std::string out = "# clarifid rule table v1\n";
  for (const auto& rule : rules_) {
    out += condition_names()[rule.condition];
    out += '\t' + join_phrases(rule.patterns) + '\t' + join_phrases(rule.negation_cues) + '\n';
  }
  return out;
}

Sentences split_sentences(std::span<const std::string> words) {
  Sentences sentences;
  Words current;
  for (const auto& w : words) {
    if (w == ".") {
      if (!current.empty()) sentences.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(w);
    }
  }
  if (!current.empty()) sentences.push_back(std::move(current));
  return sentences;
}

LabelVector extract_labels(std::span<const Words> sentences, const RuleTable& rules) {
  std::bitset<kNumPathologies> found;
  for (const auto& sentence : sentences) {
    for (const auto& rule : rules.rules()) {
      if (!found.test(rule.condition) && sentence_asserts(sentence, rule)) found.set(rule.condition);
    }
  }
  return LabelVector::from_pathologies(found);
}

PrecisionRecall prf_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  PrecisionRecall r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  if (tp + fp + fn == 0) {
    r.precision = r.recall = r.f1 = 1.0;
    return r;
  }
  r.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  r.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

PrecisionRecall micro_f1(std::span<const LabelVector> predicted, std::span<const LabelVector> gold) {
  if (predicted.size() != gold.size()) {
    throw PairingError("micro_f1: " + std::to_string(predicted.size()) + " predictions vs " +
                       std::to_string(gold.size()) + " gold label vectors");
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto& p = predicted[i].bits();
    const auto& g = gold[i].bits();
    tp += (p & g).count();
    fp += (p & ~g).count();
    fn += (~p & g).count();
  }
  return prf_from_counts(tp, fp, fn);
}

LabelVector impression_labels(std::span<const TokenId> generated, const Vocabulary& vocab,
                              const RuleTable& rules) {
  const auto decoded = decode_sequence(generated, vocab);
  return extract_labels(split_sentences(decoded.report.impression), rules);
}

double impression_reward(std::span<const TokenId> generated, const LabelVector& gold,
                         const Vocabulary& vocab, const RuleTable& rules) {
  const auto predicted = impression_labels(generated, vocab, rules);
  return micro_f1(std::span(&predicted, 1), std::span(&gold, 1)).f1;
}

}  // namespace clarifid
