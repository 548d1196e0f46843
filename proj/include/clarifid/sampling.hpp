#pragma once

#include <random>
#include <span>
#include <vector>

#include "clarifid/tokenizer.hpp"

namespace clarifid {

/// Sampling distribution after blocking, temperature and the nucleus cut.
/// Blocked ids and ids outside the nucleus get probability exactly 0. The
/// nucleus is the smallest prefix of tokens sorted by probability (ties by
/// ascending id) whose mass reaches top_p.
std::vector<double> nucleus_distribution(std::span<const double> logits, double temperature, double top_p,
                                         std::span<const TokenId> blocked = {});

TokenId sample_next(std::span<const double> logits, double temperature, double top_p,
                    std::span<const TokenId> blocked, std::mt19937_64& rng);

/// Draws an index from a normalized distribution; zero-mass entries are never chosen.
TokenId draw(std::span<const double> probs, std::mt19937_64& rng);

/// log softmax(logits)[i] with blocked ids excluded from the normalizer.
std::vector<double> masked_log_softmax(std::span<const double> logits, std::span<const TokenId> blocked);

}  // namespace clarifid
