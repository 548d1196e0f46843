#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace clarifid {

using TokenId = int;
using Words = std::vector<std::string>;
using TokenSequence = std::vector<TokenId>;

// Reserved ids, fixed in every vocabulary.
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kNext = 3;
inline constexpr TokenId kImpression = 4;
inline constexpr TokenId kUnk = 5;
inline constexpr TokenId kNumReserved = 6;

inline bool is_control(TokenId id) { return id >= kPad && id <= kImpression; }

/// Two-section report: findings as sentences, impression as one word list.
struct Report {
  std::vector<Words> findings;
  Words impression;

  friend bool operator==(const Report&, const Report&) = default;
};

/// Lowercases, splits on whitespace and splits '.' and ',' into their own tokens.
Words tokenize_text(std::string_view text);
std::string join_words(std::span<const std::string> words);

class Vocabulary {
 public:
  /// Reserved tokens, then corpus words by descending frequency, ties lexicographic.
  static Vocabulary build(std::span<const Report> corpus);
  /// Tokens in id order; the reserved prefix must be exact.
  static Vocabulary from_tokens(std::vector<std::string> tokens);
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Id of a word, or kUnk when absent.
  TokenId id(std::string_view word) const;
  bool contains(std::string_view word) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

/// `<bos>` s1 `<next>` s2 … s_m `<impression>` impression `<eos>`.
TokenSequence encode_report(const Report& report, const Vocabulary& vocab);

struct DecodeDiagnostics {
  bool missing_bos = false;
  bool missing_impression = false;
  bool missing_eos = false;
  bool empty_findings = false;
  bool empty_impression = false;
  std::size_t dropped_empty_sentences = 0;
  std::size_t stray_control_tokens = 0;
  std::size_t tokens_after_eos = 0;
  std::size_t invalid_ids = 0;  // ids outside the vocabulary, read as <unk>

  bool clean() const;
  std::string summary() const;
};

struct DecodedReport {
  Report report;
  DecodeDiagnostics diagnostics;
};

/// Total inverse of encode_report: malformations become diagnostics.
DecodedReport decode_sequence(std::span<const TokenId> tokens, const Vocabulary& vocab);

/// Space-joined token strings including control tokens.
std::string render_tokens(std::span<const TokenId> tokens, const Vocabulary& vocab);

}  // namespace clarifid
