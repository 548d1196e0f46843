#include "clarifid/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "clarifid/errors.hpp"

namespace clarifid {

namespace {

std::vector<bool> allowed_ids(std::size_t vocab, std::span<const TokenId> blocked) {
  std::vector<bool> allowed(vocab, true);
  for (auto id : blocked) {
    if (id >= 0 && static_cast<std::size_t>(id) < vocab) allowed[static_cast<std::size_t>(id)] = false;
  }
  if (std::none_of(allowed.begin(), allowed.end(), [](bool a) { return a; })) {
    throw SamplingError("every token is blocked");
  }
  return allowed;
}

}  // namespace

std::vector<double> nucleus_distribution(std::span<const double> logits, double temperature, double top_p,
                                         std::span<const TokenId> blocked) {
  if (!(temperature > 0.0)) throw SamplingError("temperature must be positive");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw SamplingError("top_p must lie in (0, 1]");
  const auto allowed = allowed_ids(logits.size(), blocked);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (allowed[i]) mx = std::max(mx, logits[i]);
  }
  std::vector<double> probs(logits.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!allowed[i]) continue;
    probs[i] = std::exp((logits[i] - mx) / temperature);
    total += probs[i];
  }
  for (auto& p : probs) p /= total;
  if (top_p >= 1.0) return probs;

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (allowed[i]) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < order.size()) {
    mass += probs[order[keep++]];
    if (mass >= top_p) break;
  }
  std::vector<double> out(probs.size(), 0.0);
  double kept = 0.0;
  for (std::size_t i = 0; i < keep; ++i) kept += probs[order[i]];
  for (std::size_t i = 0; i < keep; ++i) out[order[i]] = probs[order[i]] / kept;
  return out;
}

TokenId draw(std::span<const double> probs, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cum = 0.0;
  TokenId last = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cum += probs[i];
    last = static_cast<TokenId>(i);
    if (u < cum) return last;
  }
  if (last < 0) throw SamplingError("distribution has no mass");
  return last;
}

TokenId sample_next(std::span<const double> logits, double temperature, double top_p,
                    std::span<const TokenId> blocked, std::mt19937_64& rng) {
  const auto probs = nucleus_distribution(logits, temperature, top_p, blocked);
  return draw(probs, rng);
}

std::vector<double> masked_log_softmax(std::span<const double> logits, std::span<const TokenId> blocked) {
  const auto allowed = allowed_ids(logits.size(), blocked);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (allowed[i]) mx = std::max(mx, logits[i]);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (allowed[i]) total += std::exp(logits[i] - mx);
  }
  const double lse = mx + std::log(total);
  std::vector<double> out(logits.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (allowed[i]) out[i] = logits[i] - lse;
  }
  return out;
}

}  // namespace clarifid
