#include "clarifid/labels.hpp"

#include "clarifid/errors.hpp"

namespace clarifid {

const std::array<std::string_view, kNumConditions>& condition_names() {
  static constexpr std::array<std::string_view, kNumConditions> names = {
      "Enlarged Cardiomediastinum", "Cardiomegaly",    "Lung Opacity", "Lung Lesion",
      "Edema",                      "Consolidation",   "Pneumonia",    "Atelectasis",
      "Pneumothorax",               "Pleural Effusion", "Pleural Other", "Fracture",
      "Support Devices",            "No Finding"};
  return names;
}

std::size_t condition_index(std::string_view name) {
  const auto& names = condition_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw ConfigError("unknown condition '" + std::string(name) + "'");
}

LabelVector LabelVector::from_pathologies(std::bitset<kNumPathologies> pathologies) {
  LabelVector v;
  for (std::size_t i = 0; i < kNumPathologies; ++i) v.bits_.set(i, pathologies.test(i));
  v.bits_.set(kNoFinding, pathologies.none());
  return v;
}

LabelVector LabelVector::from_raw(std::bitset<kNumConditions> bits) {
  LabelVector v;
  v.bits_ = bits;
  return v;
}

LabelVector LabelVector::from_ints(const std::vector<int>& values) {
  if (values.size() != kNumConditions) {
    throw DataError("label vector needs " + std::to_string(kNumConditions) + " entries, got " +
                    std::to_string(values.size()));
  }
  std::bitset<kNumConditions> bits;
  for (std::size_t i = 0; i < kNumConditions; ++i) {
    if (values[i] != 0 && values[i] != 1) throw DataError("label entries must be 0 or 1");
    bits.set(i, values[i] == 1);
  }
  return from_raw(bits);
}

void LabelVector::set_pathology(std::size_t condition, bool value) {
  if (condition >= kNumPathologies) throw ConfigError("No Finding is derived, not set");
  bits_.set(condition, value);
  bool any = false;
  for (std::size_t i = 0; i < kNumPathologies; ++i) any = any || bits_.test(i);
  bits_.set(kNoFinding, !any);
}

bool LabelVector::consistent() const {
  bool any = false;
  for (std::size_t i = 0; i < kNumPathologies; ++i) any = any || bits_.test(i);
  return bits_.test(kNoFinding) == !any;
}

std::vector<int> LabelVector::to_ints() const {
  std::vector<int> out(kNumConditions);
  for (std::size_t i = 0; i < kNumConditions; ++i) out[i] = bits_.test(i) ? 1 : 0;
  return out;
}

std::string LabelVector::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < kNumConditions; ++i) {
    if (!bits_.test(i)) continue;
    if (!out.empty()) out += ", ";
    out += condition_names()[i];
  }
  return out;
}

}  // namespace clarifid
