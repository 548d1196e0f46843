#include <gtest/gtest.h>

#include <random>

#include "clarifid/errors.hpp"
#include "clarifid/tokenizer.hpp"
#include "test_support.hpp"

using namespace clarifid;

namespace {

Vocabulary letters() { return Vocabulary::build(std::vector<Report>{{{{"a"}, {"b"}, {"clear", "lungs"}}, {"c", "normal"}}}); }

TokenSequence ids(const Vocabulary& v, std::initializer_list<const char*> words) {
  TokenSequence out;
  for (const auto* w : words) out.push_back(v.id(w));
  return out;
}

}  // namespace

TEST(Tokenize, LowercasesAndSplitsPunctuation) {
  EXPECT_EQ(tokenize_text("The Heart, is  ENLARGED."), (Words{"the", "heart", ",", "is", "enlarged", "."}));
  EXPECT_TRUE(tokenize_text("   ").empty());
}

TEST(Vocabulary, ReservedPrefixAndFrequencyOrder) {
  const std::vector<Report> corpus{{{{"b", "a"}, {"b"}}, {"c"}}, {{{"a", "b"}}, {"z"}}};
  const auto v = Vocabulary::build(corpus);
  ASSERT_EQ(v.size(), kNumReserved + 4u);
  EXPECT_EQ(v.token(kPad), "<pad>");
  EXPECT_EQ(v.token(kBos), "<bos>");
  EXPECT_EQ(v.token(kEos), "<eos>");
  EXPECT_EQ(v.token(kNext), "<next>");
  EXPECT_EQ(v.token(kImpression), "<impression>");
  // b (3) > a (2) > c = z (1, lexicographic)
  EXPECT_EQ(v.token(kNumReserved), "b");
  EXPECT_EQ(v.token(kNumReserved + 1), "a");
  EXPECT_EQ(v.token(kNumReserved + 2), "c");
  EXPECT_EQ(v.token(kNumReserved + 3), "z");
  EXPECT_EQ(v.id("never-seen"), kUnk);
}

TEST(Vocabulary, SaveLoadRoundTrip) {
  fixture::TempDir dir("vocab");
  const auto& v = fixture::small_vocab();
  v.save(dir.path / "vocab.txt");
  EXPECT_EQ(Vocabulary::load(dir.path / "vocab.txt"), v);
  EXPECT_THROW(Vocabulary::from_tokens({"<bos>", "<pad>"}), StructureError);
}

TEST(Encode, LayoutExamples) {
  const auto v = letters();
  EXPECT_EQ(encode_report({{{"clear", "lungs"}}, {"normal"}}, v),
            (TokenSequence{kBos, v.id("clear"), v.id("lungs"), kImpression, v.id("normal"), kEos}));
  EXPECT_EQ(encode_report({{{"a"}, {"b"}}, {"c"}}, v),
            (TokenSequence{kBos, v.id("a"), kNext, v.id("b"), kImpression, v.id("c"), kEos}));
  EXPECT_THROW(encode_report({{}, {"c"}}, v), StructureError);
  EXPECT_THROW(encode_report({{{"a"}}, {}}, v), StructureError);
}

TEST(Encode, RoundTripAndSentenceCountOnSyntheticReports) {
  std::mt19937_64 rng(3);
  std::vector<Report> reports;
  for (int i = 0; i < 1000; ++i) {
    LabelVector y;
    for (std::size_t c = 0; c < kNumPathologies; ++c) y.set_pathology(c, rng() % 4 == 0);
    reports.push_back(render_report(y, rng));
  }
  const auto v = Vocabulary::build(reports);
  for (const auto& report : reports) {
    const auto seq = encode_report(report, v);
    const auto back = decode_sequence(seq, v);
    EXPECT_TRUE(back.diagnostics.clean()) << back.diagnostics.summary();
    EXPECT_EQ(back.report, report);
    EXPECT_EQ(static_cast<std::size_t>(std::count(seq.begin(), seq.end(), kNext)) + 1, report.findings.size());
  }
}

TEST(Decode, MissingImpressionIsFlagged) {
  const auto v = letters();
  const auto out = decode_sequence(ids(v, {"<bos>", "a", "<next>", "b", "<eos>"}), v);
  EXPECT_TRUE(out.diagnostics.missing_impression);
  EXPECT_TRUE(out.report.impression.empty());
  EXPECT_EQ(out.report.findings, (std::vector<Words>{{"a"}, {"b"}}));
}

TEST(Decode, ConsecutiveNextDropsEmptySentence) {
  const auto v = letters();
  const auto out = decode_sequence(ids(v, {"<bos>", "a", "<next>", "<next>", "b", "<impression>", "c", "<eos>"}), v);
  EXPECT_EQ(out.diagnostics.dropped_empty_sentences, 1u);
  EXPECT_EQ(out.report.findings, (std::vector<Words>{{"a"}, {"b"}}));
  EXPECT_EQ(out.report.impression, Words{"c"});
}

TEST(Decode, TotalOnArbitraryIds) {
  const auto& v = fixture::small_vocab();
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> id(-3, static_cast<int>(v.size()) + 3);
  for (int trial = 0; trial < 2000; ++trial) {
    TokenSequence seq(rng() % 40);
    for (auto& t : seq) t = id(rng);
    EXPECT_NO_THROW({
      const auto out = decode_sequence(seq, v);
      (void)out.diagnostics.summary();
    });
  }
}

TEST(Decode, MissingEosAndTrailingTokens) {
  const auto v = letters();
  auto out = decode_sequence(ids(v, {"<bos>", "a", "<impression>", "c"}), v);
  EXPECT_TRUE(out.diagnostics.missing_eos);
  EXPECT_EQ(out.report.impression, Words{"c"});
  out = decode_sequence(ids(v, {"<bos>", "a", "<impression>", "c", "<eos>", "b", "b"}), v);
  EXPECT_EQ(out.diagnostics.tokens_after_eos, 2u);
  EXPECT_FALSE(out.diagnostics.clean());
}
