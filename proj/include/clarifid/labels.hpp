#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace clarifid {

inline constexpr std::size_t kNumConditions = 14;
inline constexpr std::size_t kNumPathologies = 13;
inline constexpr std::size_t kNoFinding = 13;

/// Condition names in label-vector order; "No Finding" is last.
const std::array<std::string_view, kNumConditions>& condition_names();

/// Index of a condition by its display name; throws ConfigError when unknown.
std::size_t condition_index(std::string_view name);

/// 14 binary condition indicators. "No Finding" is kept consistent with the
/// 13 pathology bits by the constructors below.
class LabelVector {
 public:
  LabelVector() { bits_.set(kNoFinding); }

  /// Builds from 13 pathology bits and derives "No Finding".
  static LabelVector from_pathologies(std::bitset<kNumPathologies> pathologies);
  /// Builds from all 14 bits verbatim (may be inconsistent; see consistent()).
  static LabelVector from_raw(std::bitset<kNumConditions> bits);
  static LabelVector from_ints(const std::vector<int>& values);

  bool test(std::size_t condition) const { return bits_.test(condition); }
  /// Sets a pathology bit and re-derives "No Finding".
  void set_pathology(std::size_t condition, bool value);
  bool no_finding() const { return bits_.test(kNoFinding); }
  std::size_t positives() const { return bits_.count(); }
  bool consistent() const;

  const std::bitset<kNumConditions>& bits() const { return bits_; }
  std::vector<int> to_ints() const;
  std::string to_string() const;  // names of positive conditions, comma separated

  friend bool operator==(const LabelVector&, const LabelVector&) = default;

 private:
  std::bitset<kNumConditions> bits_;
};

}  // namespace clarifid
