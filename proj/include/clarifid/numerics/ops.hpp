#pragma once

#include <optional>
#include <span>
#include <vector>

#include "clarifid/numerics/tensor.hpp"

namespace clarifid::numerics {

// Elementwise and linear-algebra primitives. Each records its own gradient
// rule. Broadcasting exists only where a name says so (add_bias, add_tiled).

Tensor matmul(const Tensor& a, const Tensor& b);
/// x[m×k]·w[k×n] + bias[n], fused.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Adds a length-n vector to every row of x[...×n].
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// x[(r·m)×n] + block[m×n] with the block repeated down the rows.
Tensor add_tiled(const Tensor& x, const Tensor& block);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor exp(const Tensor& x);
/// Values clamped to [lo, hi]; gradient passes only where lo < x < hi.
Tensor clamp(const Tensor& x, double lo, double hi);
/// Elementwise min; the gradient goes to `a` on ties.
Tensor minimum(const Tensor& a, const Tensor& b);

/// Tanh-approximation GELU.
Tensor gelu(const Tensor& x);

inline constexpr double kLayerNormEps = 1e-5;
/// Per-row normalization over the last axis followed by gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = kLayerNormEps);

/// Row-wise softmax over the last axis. Entries where `mask` is 0 receive
/// exactly zero probability; a row with no unmasked entry is an error.
Tensor softmax_rows(const Tensor& x, const std::optional<Tensor>& mask = std::nullopt);
/// Row-wise log-softmax; masked entries come out as -inf and carry no gradient.
Tensor log_softmax_rows(const Tensor& x, const std::optional<Tensor>& mask = std::nullopt);

/// Mean over positions t with targets[t] != ignore_index of
/// -log softmax(logits[t])[targets[t]].
Tensor cross_entropy_logits(const Tensor& logits, std::span<const int> targets, int ignore_index);

/// Rows of `table` selected by ids: [ids.size() × d].
Tensor embedding(const Tensor& table, std::span<const int> ids);

/// out[i] = log Σ_{j ∈ sets[i]} exp(x[i, j]). A one-element set is an exact gather.
Tensor gather_logsumexp(const Tensor& x, std::span<const std::vector<int>> sets);

/// Scatters the rows of x[m×n] into a zero [rows×n] result at `destinations`.
Tensor scatter_rows(const Tensor& x, std::span<const std::size_t> destinations, std::size_t rows);
/// Picks rows of x[m×n] at `sources`.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> sources);

Tensor reshape(const Tensor& x, Shape shape);

struct AttentionSpec {
  std::size_t batch = 1;
  std::size_t heads = 1;
  bool causal = false;
  /// Optional [batch × key_len] binary mask over keys (1 = attend).
  std::optional<Tensor> key_mask;
};

/// Multi-head scaled dot-product attention over batch-stacked rows:
/// q[B·T×d], k,v[B·S×d] -> [B·T×d]. Masked or future keys get an additive
/// -inf before the softmax, so their values never influence the output.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionSpec& spec);

}  // namespace clarifid::numerics
