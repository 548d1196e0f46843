#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <fstream>
#include <set>

#include "clarifid/errors.hpp"
#include "clarifid/reward.hpp"
#include "clarifid/synthdata.hpp"
#include "test_support.hpp"

using namespace clarifid;

namespace {

LabelVector random_labels(std::mt19937_64& rng) {
  std::bernoulli_distribution on(0.3);
  LabelVector y;
  for (std::size_t c = 0; c < kNumPathologies; ++c) y.set_pathology(c, on(rng));
  return y;
}

LabelVector round_trip(const Report& r) {
  auto sentences = r.findings;
  for (const auto& s : split_sentences(r.impression)) sentences.push_back(s);
  return extract_labels(sentences);
}

// Area under the ROC curve by pair counting (ties count one half).
double auc(const std::vector<double>& score, const std::vector<int>& label) {
  double pairs = 0.0, wins = 0.0;
  for (std::size_t i = 0; i < score.size(); ++i) {
    if (!label[i]) continue;
    for (std::size_t j = 0; j < score.size(); ++j) {
      if (label[j]) continue;
      pairs += 1.0;
      wins += score[i] > score[j] ? 1.0 : score[i] == score[j] ? 0.5 : 0.0;
    }
  }
  return pairs > 0.0 ? wins / pairs : 1.0;
}

}  // namespace

TEST(RenderReport, LabelRoundTrip) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 2000; ++i) {
    const auto y = random_labels(rng);
    const auto r = render_report(y, rng);
    ASSERT_EQ(extract_labels(r.findings), y) << y.to_string();
    ASSERT_EQ(extract_labels(split_sentences(r.impression)), y) << y.to_string();
  }
}

TEST(RenderReport, NormalStudy) {
  std::mt19937_64 rng(2);
  const auto r = render_report(LabelVector{}, rng);
  const auto text = join_words(r.impression);
  EXPECT_NE(text.find("no finding"), std::string::npos) << text;
  EXPECT_TRUE(round_trip(r).no_finding());
}

TEST(RenderReport, EveryCardiomegalyTemplate) {
  LabelVector y;
  y.set_pathology(condition_index("Cardiomegaly"), true);
  std::set<Words> seen;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::mt19937_64 rng(seed);
    const auto r = render_report(y, rng);
    EXPECT_EQ(round_trip(r), y);
    for (const auto& s : r.findings) seen.insert(s);
  }
  EXPECT_GE(seen.size(), 3u);
}

TEST(Corpus, DeterministicAndSeedSensitive) {
  const auto cfg = fixture::small_corpus_config(99);
  const auto a = generate_corpus(cfg), b = generate_corpus(cfg);
  ASSERT_EQ(a.train.size(), b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(study_to_json(a.train[i]), study_to_json(b.train[i]));
  auto other = cfg;
  other.seed = 100;
  EXPECT_NE(study_to_json(generate_corpus(other).train[0]), study_to_json(a.train[0]));
}

TEST(Corpus, StructuralInvariants) {
  const auto& c = fixture::small_corpus();
  std::set<std::string> ids;
  std::set<std::size_t> view_counts;
  for (const auto* split : {&c.train, &c.val, &c.test}) {
    for (const auto& s : *split) {
      EXPECT_TRUE(ids.insert(s.study_id).second) << s.study_id;
      EXPECT_GE(s.views.size(), 1u);
      EXPECT_LE(s.views.size(), kMaxViews);
      view_counts.insert(s.views.size());
      for (const auto& g : s.views) {
        EXPECT_EQ(g.tokens, 4u);
        EXPECT_EQ(g.dim, 16u);
        EXPECT_EQ(g.values.size(), 64u);
      }
      EXPECT_TRUE(s.labels.consistent());
      EXPECT_EQ(round_trip(s.report), s.labels);
    }
  }
  EXPECT_EQ(view_counts.size(), 3u);
}

TEST(Corpus, NoiselessNegativeStudiesHaveZeroGrids) {
  auto cfg = fixture::small_corpus_config();
  cfg.sigma_view = 0.0;
  cfg.prevalence.fill(1e-12);
  for (const auto& s : generate_corpus(cfg).train) {
    EXPECT_TRUE(s.labels.no_finding());
    for (const auto& g : s.views) {
      for (double x : g.values) EXPECT_EQ(x, 0.0);
    }
  }
}

TEST(Corpus, ConfigValidation) {
  auto cfg = fixture::small_corpus_config();
  cfg.train_studies = 0;
  EXPECT_THROW(generate_corpus(cfg), ConfigError);
  cfg = fixture::small_corpus_config();
  cfg.prevalence[0] = 1.0;
  EXPECT_THROW(generate_corpus(cfg), ConfigError);
}

TEST(Corpus, JsonRoundTripAndFieldOrder) {
  const auto& s = fixture::small_corpus().train.front();
  const auto line = study_to_json(s);
  const auto back = study_from_json(line, 4, 16);
  EXPECT_EQ(back.study_id, s.study_id);
  EXPECT_EQ(back.labels, s.labels);
  EXPECT_EQ(back.views, s.views);
  EXPECT_EQ(back.report, s.report);
  std::size_t last = 0;
  for (const char* key : {"\"study_id\"", "\"labels\"", "\"views\"", "\"findings\"", "\"impression\""}) {
    const auto pos = line.find(key);
    ASSERT_NE(pos, std::string::npos) << key;
    EXPECT_GE(pos, last) << key;
    last = pos;
  }
  EXPECT_THROW(study_from_json(line, 5, 16), DataError);
  EXPECT_THROW(study_from_json("{\"study_id\": 3}"), DataError);
}

TEST(Corpus, JsonlFileRoundTrip) {
  fixture::TempDir dir("jsonl");
  const auto& train = fixture::small_corpus().train;
  write_jsonl(dir.path / "t.jsonl", train);
  const auto back = read_jsonl(dir.path / "t.jsonl", 4, 16);
  ASSERT_EQ(back.size(), train.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(study_to_json(back[i]), study_to_json(train[i]));
}

// Least-squares probe on view-averaged features, fitted on train and scored
// on test: every condition should be linearly recoverable.
TEST(Corpus, LabelsAreLinearlyRecoverable) {
  CorpusConfig cfg;
  cfg.val_studies = 1;
  cfg.test_studies = 1000;
  const auto corpus = generate_corpus(cfg);
  const auto features = [](const std::vector<StudyRecord>& studies) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(studies.size()), 65);
    for (std::size_t i = 0; i < studies.size(); ++i) {
      for (std::size_t j = 0; j < 64; ++j) {
        double m = 0.0;
        for (const auto& g : studies[i].views) m += g.values[j];
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m / static_cast<double>(studies[i].views.size());
      }
      x(static_cast<Eigen::Index>(i), 64) = 1.0;
    }
    return x;
  };
  const auto xtr = features(corpus.train), xte = features(corpus.test);
  for (std::size_t c = 0; c < kNumPathologies; ++c) {
    Eigen::VectorXd y(xtr.rows());
    for (std::size_t i = 0; i < corpus.train.size(); ++i) y(static_cast<Eigen::Index>(i)) = corpus.train[i].labels.test(c);
    const Eigen::VectorXd w = xtr.colPivHouseholderQr().solve(y);
    const Eigen::VectorXd score = xte * w;
    std::vector<double> s(score.data(), score.data() + score.size());
    std::vector<int> label;
    for (const auto& st : corpus.test) label.push_back(st.labels.test(c));
    EXPECT_GT(auc(s, label), 0.9) << condition_names()[c];
  }
}
