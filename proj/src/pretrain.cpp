#include "clarifid/pretrain.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>

#include "clarifid/errors.hpp"
#include "clarifid/numerics/ops.hpp"

namespace clarifid {

namespace ops = numerics;

void PretrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("pretrain learning rate must be positive");
  if (epochs == 0 || batch_size == 0) throw ConfigError("pretrain epochs and batch size must be positive");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be non-negative");
}

TeacherBatch make_teacher_batch(std::span<const TokenSequence> sequences) {
  TeacherBatch b;
  b.rows = sequences.size();
  for (const auto& s : sequences) {
    if (s.size() < 2) throw StructureError("teacher forcing needs at least two tokens");
    b.length = std::max(b.length, s.size() - 1);
  }
  b.inputs.assign(b.rows * b.length, kPad);
  b.targets.assign(b.rows * b.length, kPad);
  for (std::size_t r = 0; r < b.rows; ++r) {
    const auto& s = sequences[r];
    std::copy(s.begin(), s.end() - 1, b.inputs.begin() + static_cast<std::ptrdiff_t>(r * b.length));
    std::copy(s.begin() + 1, s.end(), b.targets.begin() + static_cast<std::ptrdiff_t>(r * b.length));
  }
  return b;
}

Report shuffle_findings(const Report& report, std::mt19937_64& rng) {
  Report out = report;
  std::shuffle(out.findings.begin(), out.findings.end(), rng);
  return out;
}

namespace {

std::size_t count_correct(const Tensor& logits, std::span<const TokenId> targets) {
  const auto v = logits.dim(1);
  const auto data = logits.data();
  std::size_t hits = 0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] == kPad) continue;
    const auto row = data.subspan(t * v, v);
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    hits += best == targets[t];
  }
  return hits;
}

std::size_t count_targets(std::span<const TokenId> targets) {
  return static_cast<std::size_t>(std::count_if(targets.begin(), targets.end(), [](TokenId t) { return t != kPad; }));
}

}  // namespace

LossStats pretrain_step(Model& model, numerics::Adam& optimizer, std::span<const StudyRecord* const> batch,
                        const Vocabulary& vocab, const PretrainConfig& cfg, std::mt19937_64& rng) {
  if (batch.empty()) throw ConfigError("pretrain_step: empty batch");
  std::vector<TokenSequence> sequences;
  for (const auto* s : batch) {
    sequences.push_back(encode_report(cfg.shuffle_sentences ? shuffle_findings(s->report, rng) : s->report, vocab));
  }
  const auto tb = make_teacher_batch(sequences);
  const auto packed = encode_studies(model.encoder, batch, cfg.noise_sigma, &rng);
  const auto logits = model.policy.forward(tb.inputs, tb.rows, packed);
  const auto loss = ops::cross_entropy_logits(logits, tb.targets, kPad);
  ops::backward(loss);
  optimizer.accumulate();
  optimizer.step(cfg.lr);
  return {loss.item(), count_targets(tb.targets), count_correct(logits, tb.targets)};
}

LossStats evaluate_loss(const Model& model, std::span<const StudyRecord> studies, const Vocabulary& vocab,
                        std::size_t batch_size) {
  ops::NoGradGuard guard;
  LossStats total;
  double weighted = 0.0;
  for (std::size_t first = 0; first < studies.size(); first += batch_size) {
    const auto last = std::min(studies.size(), first + batch_size);
    std::vector<const StudyRecord*> batch;
    std::vector<TokenSequence> sequences;
    for (auto i = first; i < last; ++i) {
      batch.push_back(&studies[i]);
      sequences.push_back(encode_report(studies[i].report, vocab));
    }
    const auto tb = make_teacher_batch(sequences);
    const auto packed = encode_studies(model.encoder, batch);
    const auto logits = model.policy.forward(tb.inputs, tb.rows, packed);
    const auto n = count_targets(tb.targets);
    weighted += ops::cross_entropy_logits(logits, tb.targets, kPad).item() * static_cast<double>(n);
    total.tokens += n;
    total.correct += count_correct(logits, tb.targets);
  }
  if (total.tokens == 0) throw EmptyLossError("evaluate_loss: no target tokens");
  total.loss = weighted / static_cast<double>(total.tokens);
  return total;
}

PretrainResult run_pretraining(const Model& init, std::span<const StudyRecord> train,
                               std::span<const StudyRecord> val, const Vocabulary& vocab,
                               const PretrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (train.empty() || val.empty()) throw DataError("pretraining needs non-empty train and val splits");
  Model model = init.clone();
  numerics::Adam optimizer(model.policy_parameters());
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  PretrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t token_sum = 0;
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
      std::vector<const StudyRecord*> batch;
      for (auto i = first; i < std::min(order.size(), first + cfg.batch_size); ++i) batch.push_back(&train[order[i]]);
      const auto stats = pretrain_step(model, optimizer, batch, vocab, cfg, rng);
      loss_sum += stats.loss * static_cast<double>(stats.tokens);
      token_sum += stats.tokens;
    }
    EpochLog row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(token_sum);
    row.val_loss = evaluate_loss(model, val, vocab).loss;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
    if (row.val_loss < best_val) {
      best_val = row.val_loss;
      result.best = model.clone();
      result.best_epoch = epoch;
    }
  }
  result.best.value = ValueNet::from_policy(result.best.policy, result.best.config.value_layers);
  return result;
}

void write_pretrain_log(const std::filesystem::path& path, std::span<const EpochLog> log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,train_loss,val_loss,seconds\n";
  char line[160];
  for (const auto& r : log) {
    std::snprintf(line, sizeof line, "%zu,%.10f,%.10f,%.3f\n", r.epoch, r.train_loss, r.val_loss, r.seconds);
    out << line;
  }
}

}  // namespace clarifid
