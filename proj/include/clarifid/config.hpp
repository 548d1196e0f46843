#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "clarifid/decode.hpp"
#include "clarifid/model.hpp"
#include "clarifid/ppo.hpp"
#include "clarifid/pretrain.hpp"
#include "clarifid/synthdata.hpp"

namespace clarifid {

/// Everything a command needs, as one flat key=value file. Keys are
/// "<group>.<field>", e.g. "ppo.lr_peak" or "corpus.sigma_view".
struct RunConfig {
  CorpusConfig corpus;
  ModelConfig model;
  std::uint64_t model_seed = 1;
  PretrainConfig pretrain;
  PPOConfig ppo;
  DecodeConfig decode;
  /// Single-candidate unforced decoding for SL/RL rows and the PPO log.
  DecodeConfig eval_decode;
  std::vector<std::size_t> sweep_ks{2, 4, 6, 8, 10, 12, 15};
  std::string data_dir = "data/synth";

  /// Desk-scale settings; this is what an empty config file resolves to.
  static RunConfig desk();
  /// Applies `key = value` lines on top of desk(). '#' starts a comment.
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  /// Throws ConfigError for unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static std::vector<std::string> keys();

  /// Every key with its resolved value, in a fixed order.
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;
  void validate() const;
};

}  // namespace clarifid
