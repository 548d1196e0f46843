#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "clarifid/checkpoint.hpp"
#include "clarifid/errors.hpp"
#include "clarifid/numerics/adam.hpp"
#include "clarifid/pretrain.hpp"
#include "test_support.hpp"

using namespace clarifid;

namespace {

std::vector<const StudyRecord*> first(std::size_t n) {
  std::vector<const StudyRecord*> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(&fixture::small_corpus().train[i]);
  return out;
}

numerics::Adam optimizer_for(const Model& m) { return numerics::Adam(m.policy_parameters()); }

std::vector<double> train_losses(bool shuffle, std::uint64_t seed) {
  auto m = fixture::tiny_model(5);
  auto adam = optimizer_for(m);
  PretrainConfig cfg;
  cfg.lr = 3e-3;
  cfg.shuffle_sentences = shuffle;
  std::mt19937_64 rng(seed);
  std::vector<double> out;
  for (std::size_t step = 0; step < 4; ++step) {
    const auto batch = first(8 + step);
    out.push_back(pretrain_step(m, adam, batch, fixture::small_vocab(), cfg, rng).loss);
  }
  return out;
}

PretrainConfig quick_config() {
  PretrainConfig cfg;
  cfg.lr = 3e-3;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  return cfg;
}

}  // namespace

TEST(TeacherBatch, ShiftsAndPads) {
  const std::vector<TokenSequence> seqs{{kBos, 7, kImpression, 8, kEos}, {kBos, 9, kEos}};
  const auto b = make_teacher_batch(seqs);
  EXPECT_EQ(b.rows, 2u);
  EXPECT_EQ(b.length, 4u);
  EXPECT_EQ(b.inputs, (std::vector<TokenId>{kBos, 7, kImpression, 8, kBos, 9, kPad, kPad}));
  EXPECT_EQ(b.targets, (std::vector<TokenId>{7, kImpression, 8, kEos, 9, kEos, kPad, kPad}));
}

TEST(Shuffle, PermutesOnlyFindings) {
  std::mt19937_64 rng(2);
  const auto& v = fixture::small_vocab();
  for (const auto& s : fixture::small_corpus().train) {
    const auto r = shuffle_findings(s.report, rng);
    EXPECT_EQ(r.impression, s.report.impression);
    auto a = r.findings, b = s.report.findings;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
    const auto seq = encode_report(r, v);
    EXPECT_TRUE(decode_sequence(seq, v).diagnostics.clean());
    EXPECT_EQ(static_cast<std::size_t>(std::count(seq.begin(), seq.end(), kNext)) + 1, r.findings.size());
  }
}

TEST(PretrainStep, FirstLossIsNearLogV) {
  auto m = fixture::tiny_model(9);
  auto adam = optimizer_for(m);
  PretrainConfig cfg;
  std::mt19937_64 rng(1);
  const auto stats = pretrain_step(m, adam, first(8), fixture::small_vocab(), cfg, rng);
  const double lnv = std::log(static_cast<double>(fixture::small_vocab().size()));
  EXPECT_NEAR(stats.loss, lnv, 0.1 * lnv);
}

TEST(PretrainStep, EmptyBatchIsAConfigError) {
  auto m = fixture::tiny_model();
  auto adam = optimizer_for(m);
  std::mt19937_64 rng(1);
  EXPECT_THROW(pretrain_step(m, adam, {}, fixture::small_vocab(), PretrainConfig{}, rng), ConfigError);
}

TEST(PretrainStep, DeterministicAndShuffleSensitive) {
  EXPECT_EQ(train_losses(false, 4), train_losses(false, 4));
  EXPECT_EQ(train_losses(true, 4), train_losses(true, 4));
  EXPECT_NE(train_losses(true, 4), train_losses(false, 4));
}

TEST(Loss, PaddingNeverChangesTheLoss) {
  const auto m = fixture::tiny_model(2);
  const auto& train = fixture::small_corpus().train;
  const std::span<const StudyRecord> some(train.data(), 10);
  const auto alone = evaluate_loss(m, some, fixture::small_vocab(), 1);
  const auto batched = evaluate_loss(m, some, fixture::small_vocab(), 10);
  EXPECT_EQ(alone.tokens, batched.tokens);
  EXPECT_EQ(alone.correct, batched.correct);
  EXPECT_NEAR(alone.loss, batched.loss, 1e-12);
}

TEST(RunPretraining, ImprovesAndReloadsExactly) {
  fixture::TempDir dir("pretrain");
  const auto& c = fixture::small_corpus();
  std::size_t epochs_seen = 0;
  const auto result = run_pretraining(fixture::tiny_model(4), c.train, c.val, fixture::small_vocab(), quick_config(),
                                      [&](const EpochLog&) { ++epochs_seen; });
  ASSERT_EQ(result.log.size(), 3u);
  EXPECT_EQ(epochs_seen, 3u);
  EXPECT_LT(result.log[result.best_epoch].val_loss, result.log[0].val_loss + 1e-12);
  EXPECT_LT(result.log.back().val_loss, result.log.front().val_loss);
  for (const auto& e : result.log) EXPECT_LE(result.log[result.best_epoch].val_loss, e.val_loss);

  save_checkpoint(dir.path / "best.ckpt", result.best);
  const auto reloaded = load_checkpoint(dir.path / "best.ckpt");
  EXPECT_EQ(evaluate_loss(reloaded, c.val, fixture::small_vocab()).loss,
            result.log[result.best_epoch].val_loss);

  write_pretrain_log(dir.path / "log.csv", result.log);
  std::ifstream in(dir.path / "log.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "epoch,train_loss,val_loss,seconds");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3u);
}

TEST(RunPretraining, RequiresBothSplits) {
  const auto& c = fixture::small_corpus();
  EXPECT_THROW(run_pretraining(fixture::tiny_model(), c.train, {}, fixture::small_vocab(), quick_config()), DataError);
}
