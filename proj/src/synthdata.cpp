#include "clarifid/synthdata.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "clarifid/errors.hpp"

namespace clarifid {

namespace {

struct ConditionTemplates {
  std::array<const char*, 3> findings;
  const char* impression;
};

// Row order follows the label vector. Each phrase is matched by the rule table
// for its own condition and by no other.
const std::array<ConditionTemplates, kNumPathologies>& templates() {
  static const std::array<ConditionTemplates, kNumPathologies> t = {{
      {{"the cardiomediastinal silhouette is enlarged", "the mediastinum is widened",
        "there is mediastinal widening"},
       "enlarged cardiomediastinum"},
      {{"the heart is enlarged", "moderate cardiomegaly is present",
        "there is an enlarged cardiac silhouette"},
       "cardiomegaly"},
      {{"there is a patchy opacity at the right base", "there are bibasilar opacities",
        "hazy opacification of the left lung"},
       "lung opacity"},
      {{"a nodule is seen in the left upper lobe", "there is a right hilar mass",
        "a pulmonary lesion is noted"},
       "lung lesion"},
      {{"there is mild pulmonary edema", "pulmonary vascular congestion is present",
        "interstitial edema is seen"},
       "pulmonary edema"},
      {{"there is consolidation in the left lower lobe", "focal consolidation is present",
        "dense consolidation at the right base"},
       "consolidation"},
      {{"findings are concerning for pneumonia", "there is evidence of an infectious process",
        "the appearance suggests pneumonia"},
       "pneumonia"},
      {{"there is bibasilar atelectasis", "linear atelectasis at the left base",
        "subsegmental atelectasis is present"},
       "atelectasis"},
      {{"there is a small right apical pneumothorax", "a left pneumothorax is present",
        "a tiny pneumothorax is seen"},
       "pneumothorax"},
      {{"there is a small left pleural effusion", "bilateral effusions are present",
        "a moderate right pleural effusion is seen"},
       "pleural effusion"},
      {{"there is apical pleural thickening", "calcified pleural plaques are seen",
        "mild pleural thickening at the left base"},
       "pleural thickening"},
      {{"there is a healing rib fracture", "an old left clavicle fracture is noted",
        "multiple rib fractures are seen"},
       "rib fracture"},
      {{"a right central venous catheter is in place", "an endotracheal tube is present",
        "a cardiac pacemaker is seen"},
       "support devices in place"},
  }};
  return t;
}

struct Distractor {
  const char* text;
  std::vector<std::size_t> requires_absent;
};

const std::vector<Distractor>& distractors() {
  static const std::vector<Distractor> d = {
      {"the lungs are clear", {2, 4, 5, 6}},
      {"there is no pneumothorax", {8}},
      {"no pleural effusion is seen", {9}},
      {"heart size is normal", {0, 1}},
      {"no acute osseous abnormality", {11}},
      {"there is no focal consolidation", {5}},
  };
  return d;
}

constexpr std::array<const char*, 3> kNormalFindings = {
    "no acute cardiopulmonary process", "there is no acute cardiopulmonary abnormality",
    "no acute cardiopulmonary disease is seen"};

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

const char* split_name(int split) {
  static constexpr std::array<const char*, 3> names = {"train", "val", "test"};
  return names[static_cast<std::size_t>(split)];
}

}  // namespace

const std::array<double, kNumPathologies>& default_prevalence() {
  static constexpr std::array<double, kNumPathologies> p = {
      0.092, 0.391, 0.379, 0.067, 0.180, 0.052, 0.046, 0.244, 0.019, 0.296, 0.038, 0.058, 0.332};
  return p;
}

void CorpusConfig::validate() const {
  if (train_studies == 0 || val_studies == 0 || test_studies == 0) {
    throw ConfigError("every split needs at least one study");
  }
  if (tokens_per_view == 0 || feature_dim == 0) throw ConfigError("N and D must be at least 1");
  for (std::size_t c = 0; c < kNumPathologies; ++c) {
    if (!(prevalence[c] > 0.0 && prevalence[c] < 1.0)) {
      throw ConfigError("prevalence of " + std::string(condition_names()[c]) + " must lie in (0,1)");
    }
  }
  if (!(sigma_view >= 0.0)) throw ConfigError("sigma_view must be non-negative");
  if (template_version != 1) throw ConfigError("unknown template version " + std::to_string(template_version));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<FeatureGrid> condition_projections(const CorpusConfig& cfg) {
  std::mt19937_64 rng(derive_seed(cfg.seed, 0xC0FFEE));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<FeatureGrid> w(kNumPathologies);
  for (auto& grid : w) {
    grid.tokens = cfg.tokens_per_view;
    grid.dim = cfg.feature_dim;
    grid.values.resize(grid.tokens * grid.dim);
    for (auto& x : grid.values) x = normal(rng);
  }
  return w;
}

Report render_report(const LabelVector& labels, std::mt19937_64& rng) {
  Report report;
  Words impression;
  for (std::size_t c = 0; c < kNumPathologies; ++c) {
    if (!labels.test(c)) continue;
    const auto& t = templates()[c];
    report.findings.push_back(tokenize_text(t.findings[pick(rng, t.findings.size())]));
    for (auto& w : tokenize_text(t.impression)) impression.push_back(std::move(w));
    impression.emplace_back(".");
  }
  if (report.findings.empty()) {
    report.findings.push_back(tokenize_text(kNormalFindings[pick(rng, kNormalFindings.size())]));
    impression = {"no", "finding", "."};
  }

  std::vector<const Distractor*> eligible;
  for (const auto& d : distractors()) {
    if (std::none_of(d.requires_absent.begin(), d.requires_absent.end(),
                     [&](std::size_t c) { return labels.test(c); })) {
      eligible.push_back(&d);
    }
  }
  std::shuffle(eligible.begin(), eligible.end(), rng);
  const std::size_t extra = std::min(pick(rng, 3), eligible.size());
  for (std::size_t i = 0; i < extra; ++i) report.findings.push_back(tokenize_text(eligible[i]->text));

  std::shuffle(report.findings.begin(), report.findings.end(), rng);
  report.impression = std::move(impression);
  return report;
}

StudyRecord generate_study(const CorpusConfig& cfg, const std::vector<FeatureGrid>& projections,
                           std::string study_id, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bitset<kNumPathologies> bits;
  for (std::size_t c = 0; c < kNumPathologies; ++c) {
    bits.set(c, std::bernoulli_distribution(cfg.prevalence[c])(rng));
  }
  StudyRecord study;
  study.study_id = std::move(study_id);
  study.labels = LabelVector::from_pathologies(bits);

  FeatureGrid signal{cfg.tokens_per_view, cfg.feature_dim,
                     std::vector<double>(cfg.tokens_per_view * cfg.feature_dim, 0.0)};
  for (std::size_t c = 0; c < kNumPathologies; ++c) {
    if (!study.labels.test(c)) continue;
    for (std::size_t i = 0; i < signal.values.size(); ++i) signal.values[i] += projections[c].values[i];
  }
  const std::size_t views = 1 + pick(rng, kMaxViews);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t v = 0; v < views; ++v) {
    FeatureGrid grid = signal;
    if (cfg.sigma_view > 0.0) {
      for (auto& x : grid.values) x += cfg.sigma_view * noise(rng);
    }
    study.views.push_back(std::move(grid));
  }
  study.report = render_report(study.labels, rng);
  return study;
}

Corpus generate_corpus(const CorpusConfig& cfg) {
  cfg.validate();
  const auto projections = condition_projections(cfg);
  Corpus corpus;
  const std::array<std::size_t, 3> counts = {cfg.train_studies, cfg.val_studies, cfg.test_studies};
  const std::array<std::vector<StudyRecord>*, 3> outs = {&corpus.train, &corpus.val, &corpus.test};
  for (int split = 0; split < 3; ++split) {
    auto& out = *outs[static_cast<std::size_t>(split)];
    out.reserve(counts[static_cast<std::size_t>(split)]);
    const auto split_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(split) + 1);
    for (std::size_t i = 0; i < counts[static_cast<std::size_t>(split)]; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "%s-%05zu", split_name(split), i);
      out.push_back(generate_study(cfg, projections, id, derive_seed(split_seed, i)));
    }
  }
  return corpus;
}

std::string study_to_json(const StudyRecord& study) {
  nlohmann::ordered_json j;
  j["study_id"] = study.study_id;
  j["labels"] = study.labels.to_ints();
  j["views"] = nlohmann::ordered_json::array();
  for (const auto& grid : study.views) {
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < grid.tokens; ++r) {
      const auto first = grid.values.begin() + static_cast<std::ptrdiff_t>(r * grid.dim);
      rows.push_back(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(grid.dim)));
    }
    j["views"].push_back(std::move(rows));
  }
  auto& findings = j["findings"] = nlohmann::ordered_json::array();
  for (const auto& s : study.report.findings) findings.push_back(join_words(s));
  j["impression"] = join_words(study.report.impression);
  return j.dump();
}

StudyRecord study_from_json(std::string_view line, std::size_t tokens_per_view, std::size_t feature_dim) {
  StudyRecord study;
  try {
    const auto j = nlohmann::json::parse(line);
    study.study_id = j.at("study_id").get<std::string>();
    study.labels = LabelVector::from_ints(j.at("labels").get<std::vector<int>>());
    if (!study.labels.consistent()) throw DataError("No Finding disagrees with the pathology labels");
    const auto& views = j.at("views");
    if (!views.is_array() || views.empty() || views.size() > kMaxViews) {
      throw DataError("a study needs 1 to 3 views");
    }
    for (const auto& view : views) {
      FeatureGrid grid;
      for (const auto& row : view) {
        const auto values = row.get<std::vector<double>>();
        if (grid.tokens == 0) grid.dim = values.size();
        if (values.size() != grid.dim || grid.dim == 0) throw DataError("ragged view grid");
        grid.values.insert(grid.values.end(), values.begin(), values.end());
        ++grid.tokens;
      }
      if (grid.tokens == 0) throw DataError("empty view grid");
      if (tokens_per_view && grid.tokens != tokens_per_view) throw DataError("view grid has wrong token count");
      if (feature_dim && grid.dim != feature_dim) throw DataError("view grid has wrong feature width");
      if (!study.views.empty() && (grid.tokens != study.views.front().tokens || grid.dim != study.views.front().dim)) {
        throw DataError("views of one study differ in shape");
      }
      study.views.push_back(std::move(grid));
    }
    for (const auto& s : j.at("findings")) study.report.findings.push_back(tokenize_text(s.get<std::string>()));
    study.report.impression = tokenize_text(j.at("impression").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed study record: ") + e.what());
  }
  return study;
}

void write_jsonl(const std::filesystem::path& path, std::span<const StudyRecord> studies) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& s : studies) out << study_to_json(s) << '\n';
}

std::vector<StudyRecord> read_jsonl(const std::filesystem::path& path, std::size_t tokens_per_view,
                                    std::size_t feature_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  std::vector<StudyRecord> studies;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    studies.push_back(study_from_json(line, tokens_per_view, feature_dim));
  }
  return studies;
}

Vocabulary build_vocabulary(std::span<const StudyRecord> studies) {
  const auto reports = reports_of(studies);
  return Vocabulary::build(reports);
}

std::vector<Report> reports_of(std::span<const StudyRecord> studies) {
  std::vector<Report> reports;
  reports.reserve(studies.size());
  for (const auto& s : studies) reports.push_back(s.report);
  return reports;
}

}  // namespace clarifid
