#include "clarifid/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <utility>

#include "clarifid/errors.hpp"
#include "clarifid/numerics/tensor.hpp"

namespace clarifid {

Section parse_section(std::string_view name) {
  if (name == "findings") return Section::kFindings;
  if (name == "impression") return Section::kImpression;
  if (name == "full") return Section::kFull;
  throw UsageError("unknown section '" + std::string(name) + "' (expected findings, impression or full)");
}

std::string_view section_name(Section s) {
  switch (s) {
    case Section::kFindings: return "findings";
    case Section::kImpression: return "impression";
    case Section::kFull: return "full";
  }
  return "";
}

Words section_words(const Report& report, Section section) {
  Words out;
  if (section != Section::kImpression) {
    for (const auto& s : report.findings) {
      out.insert(out.end(), s.begin(), s.end());
      out.emplace_back(".");
    }
  }
  if (section != Section::kFindings) out.insert(out.end(), report.impression.begin(), report.impression.end());
  return out;
}

LabelVector section_labels(const Report& report, Section section, const RuleTable& rules) {
  return extract_labels(split_sentences(section_words(report, section)), rules);
}

CEBlock ce_from_labels(std::span<const LabelVector> predicted, std::span<const LabelVector> gold) {
  CEBlock block;
  block.micro = micro_f1(predicted, gold);
  double macro = 0.0;
  for (std::size_t c = 0; c < kNumConditions; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      const bool p = predicted[i].test(c), g = gold[i].test(c);
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
    }
    block.per_class[c] = prf_from_counts(tp, fp, fn);
    macro += block.per_class[c].f1;
  }
  block.macro_f1 = macro / static_cast<double>(kNumConditions);
  return block;
}

CEBlock ce_metrics(std::span<const Report> generated, std::span<const LabelVector> gold, Section section,
                   const RuleTable& rules) {
  if (generated.size() != gold.size()) {
    throw PairingError("ce_metrics: " + std::to_string(generated.size()) + " reports vs " +
                       std::to_string(gold.size()) + " label vectors");
  }
  std::vector<LabelVector> predicted;
  predicted.reserve(generated.size());
  for (const auto& r : generated) predicted.push_back(section_labels(r, section, rules));
  return ce_from_labels(predicted, gold);
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const Words& words, std::size_t n) {
  NgramCounts counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    ++counts[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                      words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

std::size_t lcs_length(const Words& a, const Words& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double bleu(std::span<const Words> hypotheses, std::span<const Words> references, int max_n) {
  if (max_n < 1 || max_n > 4) throw UsageError("BLEU order must be between 1 and 4");
  if (hypotheses.empty()) throw UsageError("BLEU over an empty corpus");
  if (hypotheses.size() != references.size()) throw PairingError("BLEU: hypothesis/reference count mismatch");
  std::vector<double> matched(static_cast<std::size_t>(max_n), 0.0), total(static_cast<std::size_t>(max_n), 0.0);
  double hyp_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    hyp_len += static_cast<double>(hypotheses[i].size());
    ref_len += static_cast<double>(references[i].size());
    for (int n = 1; n <= max_n; ++n) {
      const auto h = ngrams(hypotheses[i], static_cast<std::size_t>(n));
      const auto r = ngrams(references[i], static_cast<std::size_t>(n));
      for (const auto& [gram, count] : h) {
        auto it = r.find(gram);
        matched[static_cast<std::size_t>(n - 1)] += static_cast<double>(std::min(count, it == r.end() ? 0 : it->second));
        total[static_cast<std::size_t>(n - 1)] += static_cast<double>(count);
      }
    }
  }
  double log_sum = 0.0;
  for (int n = 0; n < max_n; ++n) {
    const auto k = static_cast<std::size_t>(n);
    if (matched[k] == 0.0 || total[k] == 0.0) return 0.0;
    log_sum += std::log(matched[k] / total[k]);
  }
  const double bp = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(max_n));
}

double rouge_l(std::span<const Words> hypotheses, std::span<const Words> references) {
  if (hypotheses.size() != references.size()) throw PairingError("ROUGE-L: hypothesis/reference count mismatch");
  if (hypotheses.empty()) throw UsageError("ROUGE-L over an empty corpus");
  double sum = 0.0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto& h = hypotheses[i];
    const auto& r = references[i];
    if (h.empty() || r.empty()) {
      sum += h.empty() && r.empty() ? 1.0 : 0.0;
      continue;
    }
    const auto lcs = static_cast<double>(lcs_length(h, r));
    if (lcs == 0.0) continue;
    const double p = lcs / static_cast<double>(h.size());
    const double rec = lcs / static_cast<double>(r.size());
    sum += 2.0 * p * rec / (p + rec);
  }
  return sum / static_cast<double>(hypotheses.size());
}

const SectionMetrics& MetricsReport::section(Section s) const {
  switch (s) {
    case Section::kFindings: return findings;
    case Section::kImpression: return impression;
    case Section::kFull: break;
  }
  return full;
}

SectionMetrics& MetricsReport::section(Section s) {
  return const_cast<SectionMetrics&>(std::as_const(*this).section(s));
}

MetricsReport compute_metrics(std::span<const Report> generated, std::span<const StudyRecord> gold) {
  if (generated.size() != gold.size()) throw PairingError("compute_metrics: report/study count mismatch");
  std::vector<LabelVector> labels;
  for (const auto& s : gold) labels.push_back(s.labels);
  MetricsReport out;
  out.corpus_size = generated.size();
  for (auto section : {Section::kFindings, Section::kImpression, Section::kFull}) {
    SectionMetrics m;
    m.ce = ce_metrics(generated, labels, section);
    std::vector<Words> hyps, refs;
    for (std::size_t i = 0; i < generated.size(); ++i) {
      hyps.push_back(section_words(generated[i], section));
      refs.push_back(section_words(gold[i].report, section));
    }
    if (!hyps.empty()) {
      m.bleu1 = bleu(hyps, refs, 1);
      m.bleu4 = bleu(hyps, refs, 4);
      m.rouge_l = rouge_l(hyps, refs);
    }
    out.section(section) = m;
  }
  return out;
}

PackedStudyBatch encode_study(const ViewEncoder& encoder, const StudyRecord& study) {
  numerics::NoGradGuard guard;
  const StudyRecord* p = &study;
  return encode_studies(encoder, std::span(&p, 1));
}

std::vector<GeneratedReport> generate_reports(const Model& model, std::span<const StudyRecord> studies,
                                              const Vocabulary& vocab, const DecodeConfig& cfg) {
  std::vector<GeneratedReport> out;
  out.reserve(studies.size());
  for (std::size_t i = 0; i < studies.size(); ++i) {
    const auto batch = encode_study(model.encoder, studies[i]);
    auto study_cfg = cfg;
    study_cfg.seed = derive_seed(cfg.seed, i);
    auto best = generate_report(model.policy, model.value, batch, study_cfg);
    auto decoded = decode_sequence(best.tokens, vocab);
    out.push_back({std::move(best.tokens), std::move(decoded.report), decoded.diagnostics, std::move(best.scores),
                   best.chosen});
  }
  return out;
}

MetricsReport evaluate_corpus(const Model& model, std::span<const StudyRecord> studies, const Vocabulary& vocab,
                              const DecodeConfig& cfg) {
  const auto generated = generate_reports(model, studies, vocab, cfg);
  std::vector<Report> reports;
  for (const auto& g : generated) reports.push_back(g.report);
  return compute_metrics(reports, studies);
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "section,metric,value\n";
  for (auto section : {Section::kFindings, Section::kImpression, Section::kFull}) {
    const auto& m = report.section(section);
    const auto name = section_name(section);
    const std::pair<const char*, double> rows[] = {
        {"precision", m.ce.micro.precision}, {"recall", m.ce.micro.recall}, {"f1", m.ce.micro.f1},
        {"macro_f1", m.ce.macro_f1},         {"bleu1", m.bleu1},            {"bleu4", m.bleu4},
        {"rouge_l", m.rouge_l}};
    for (const auto& [metric, value] : rows) out << name << ',' << metric << ',' << format_number(value) << '\n';
  }
  out << "all,corpus_size," << report.corpus_size << '\n';
}

void write_per_class_csv(const std::filesystem::path& path, const CEBlock& block) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "condition,P,R,F1\n";
  for (std::size_t c = 0; c < kNumConditions; ++c) {
    const auto& pr = block.per_class[c];
    out << condition_names()[c] << ',' << format_number(pr.precision) << ',' << format_number(pr.recall) << ','
        << format_number(pr.f1) << '\n';
  }
}

std::vector<SweepRow> sweep_forcing(const Model& model, std::span<const StudyRecord> studies,
                                    const Vocabulary& vocab, std::span<const std::size_t> ks, DecodeConfig cfg) {
  std::vector<SweepRow> rows;
  cfg.candidates = 1;
  cfg.force = true;
  for (auto k : ks) {
    cfg.k = k;
    const auto m = evaluate_corpus(model, studies, vocab, cfg);
    rows.push_back({k, m.findings.ce.micro.f1, m.impression.ce.micro.f1});
  }
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "k,findings_f1,impression_f1\n";
  for (const auto& r : rows) out << r.k << ',' << format_number(r.findings_f1) << ',' << format_number(r.impression_f1) << '\n';
}

const std::vector<std::pair<double, double>>& default_temperature_grid() {
  static const std::vector<std::pair<double, double>> grid = {{1.2, 0.8}, {1.0, 1.0}, {1.0, 0.8}, {1.0, 0.5}};
  return grid;
}

std::vector<TemperatureRow> sweep_temperature(const Model& model, std::span<const StudyRecord> studies,
                                              const Vocabulary& vocab,
                                              std::span<const std::pair<double, double>> grid, DecodeConfig cfg) {
  std::vector<TemperatureRow> rows;
  for (const auto& [tf, ti] : grid) {
    cfg.t_find = tf;
    cfg.t_imp = ti;
    const auto m = evaluate_corpus(model, studies, vocab, cfg);
    rows.push_back({tf, ti, m.findings.ce.micro.f1, m.impression.ce.micro.f1});
  }
  return rows;
}

void write_temperature_csv(const std::filesystem::path& path, std::span<const TemperatureRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "t_find,t_imp,findings_f1,impression_f1\n";
  for (const auto& r : rows) {
    out << format_number(r.t_find) << ',' << format_number(r.t_imp) << ',' << format_number(r.findings_f1) << ','
        << format_number(r.impression_f1) << '\n';
  }
}

std::vector<AblationRow> run_ablation(const Model& pretrained, const Model& tuned,
                                      std::span<const StudyRecord> studies, const Vocabulary& vocab,
                                      const DecodeConfig& cfg) {
  auto single = cfg;
  single.candidates = 1;
  single.force = false;
  auto forced = single;
  forced.force = true;
  auto best_of = forced;
  best_of.candidates = cfg.candidates;
  std::vector<AblationRow> rows;
  rows.push_back({"SL", evaluate_corpus(pretrained, studies, vocab, single)});
  rows.push_back({"+RL", evaluate_corpus(tuned, studies, vocab, single)});
  rows.push_back({"+FG", evaluate_corpus(tuned, studies, vocab, forced)});
  rows.push_back({"+BoN", evaluate_corpus(tuned, studies, vocab, best_of)});
  return rows;
}

void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "row,findings_f1,impression_f1,full_f1,bleu1,bleu4,rouge_l\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out << r.name << ',' << format_number(m.findings.ce.micro.f1) << ',' << format_number(m.impression.ce.micro.f1)
        << ',' << format_number(m.full.ce.micro.f1) << ',' << format_number(m.full.bleu1) << ','
        << format_number(m.full.bleu4) << ',' << format_number(m.full.rouge_l) << '\n';
  }
}

}  // namespace clarifid
