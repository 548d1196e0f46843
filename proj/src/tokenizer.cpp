#include "clarifid/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "clarifid/errors.hpp"

namespace clarifid {

namespace {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> tokens = {"<pad>", "<bos>",        "<eos>",
                                                  "<next>", "<impression>", "<unk>"};
  return tokens;
}

}  // namespace

Words tokenize_text(std::string_view text) {
  Words words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (ch == '.' || ch == ',') {
      flush();
      words.emplace_back(1, ch);
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return words;
}

std::string join_words(std::span<const std::string> words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

Vocabulary Vocabulary::build(std::span<const Report> corpus) {
  std::map<std::string, std::size_t> counts;
  auto add = [&](const Words& words) {
    for (const auto& w : words) ++counts[w];
  };
  for (const auto& r : corpus) {
    for (const auto& s : r.findings) add(s);
    add(r.impression);
  }
  for (const auto& t : reserved_tokens()) counts.erase(t);
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = reserved_tokens();
  for (auto& [word, _] : ordered) tokens.push_back(word);
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  const auto& reserved = reserved_tokens();
  if (tokens.size() < reserved.size() ||
      !std::equal(reserved.begin(), reserved.end(), tokens.begin())) {
    throw StructureError("vocabulary must start with the reserved tokens <pad> <bos> <eos> <next> <impression> <unk>");
  }
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.ids_.emplace(v.tokens_[i], static_cast<TokenId>(i)).second) {
      throw StructureError("duplicate vocabulary token '" + v.tokens_[i] + "'");
    }
  }
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary file " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

TokenId Vocabulary::id(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view word) const { return ids_.count(std::string(word)) > 0; }

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw StructureError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenSequence encode_report(const Report& report, const Vocabulary& vocab) {
  if (report.findings.empty()) throw StructureError("report has no findings sentences");
  if (report.impression.empty()) throw StructureError("report has an empty impression");
  TokenSequence seq{kBos};
  for (std::size_t i = 0; i < report.findings.size(); ++i) {
    const auto& sentence = report.findings[i];
    if (sentence.empty()) throw StructureError("findings sentence " + std::to_string(i) + " is empty");
    if (i) seq.push_back(kNext);
    for (const auto& w : sentence) seq.push_back(vocab.id(w));
  }
  seq.push_back(kImpression);
  for (const auto& w : report.impression) seq.push_back(vocab.id(w));
  seq.push_back(kEos);
  return seq;
}

bool DecodeDiagnostics::clean() const {
  return !missing_bos && !missing_impression && !missing_eos && !empty_findings &&
         !empty_impression && dropped_empty_sentences == 0 && stray_control_tokens == 0 &&
         tokens_after_eos == 0 && invalid_ids == 0;
}

std::string DecodeDiagnostics::summary() const {
  std::ostringstream os;
  const char* sep = "";
  auto flag = [&](bool on, const char* name) {
    if (on) {
      os << sep << name;
      sep = ",";
    }
  };
  flag(missing_bos, "missing_bos");
  flag(missing_impression, "missing_impression");
  flag(missing_eos, "missing_eos");
  flag(empty_findings, "empty_findings");
  flag(empty_impression, "empty_impression");
  if (dropped_empty_sentences) {
    os << sep << "dropped_empty_sentences=" << dropped_empty_sentences;
    sep = ",";
  }
  if (stray_control_tokens) {
    os << sep << "stray_control_tokens=" << stray_control_tokens;
    sep = ",";
  }
  if (tokens_after_eos) {
    os << sep << "tokens_after_eos=" << tokens_after_eos;
    sep = ",";
  }
  if (invalid_ids) os << sep << "invalid_ids=" << invalid_ids;
  const auto s = os.str();
  return s.empty() ? "ok" : s;
}

DecodedReport decode_sequence(std::span<const TokenId> tokens, const Vocabulary& vocab) {
  DecodedReport out;
  auto& diag = out.diagnostics;
  std::size_t i = 0;
  if (!tokens.empty() && tokens[0] == kBos) {
    i = 1;
  } else {
    diag.missing_bos = true;
  }

  auto word = [&](TokenId t) -> const std::string& {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab.size()) {
      ++diag.invalid_ids;
      return vocab.token(kUnk);
    }
    return vocab.token(t);
  };

  Words sentence;
  auto close_sentence = [&](bool at_boundary) {
    if (!sentence.empty()) {
      out.report.findings.push_back(std::move(sentence));
      sentence.clear();
    } else if (!at_boundary) {
      ++diag.dropped_empty_sentences;
    }
  };

  bool saw_impression = false;
  bool saw_eos = false;
  for (; i < tokens.size(); ++i) {
    const TokenId t = tokens[i];
    if (t == kImpression) {
      // A findings span ending in `<next>` is the normal shape of forced
      // decoding; the empty tail is not a malformation.
      close_sentence(true);
      saw_impression = true;
      ++i;
      break;
    }
    if (t == kEos) {
      close_sentence(true);
      saw_eos = true;
      ++i;
      break;
    }
    if (t == kNext) {
      close_sentence(false);
      continue;
    }
    if (t == kPad) continue;
    if (t == kBos) {
      ++diag.stray_control_tokens;
      continue;
    }
    sentence.push_back(word(t));
  }
  if (!saw_impression && !saw_eos) close_sentence(true);

  if (saw_impression) {
    for (; i < tokens.size(); ++i) {
      const TokenId t = tokens[i];
      if (t == kEos) {
        saw_eos = true;
        ++i;
        break;
      }
      if (t == kPad) continue;
      if (is_control(t)) {
        ++diag.stray_control_tokens;
        continue;
      }
      out.report.impression.push_back(word(t));
    }
  } else {
    diag.missing_impression = true;
  }
  if (!saw_eos) diag.missing_eos = true;
  diag.tokens_after_eos = saw_eos ? tokens.size() - i : 0;
  diag.empty_findings = out.report.findings.empty();
  diag.empty_impression = out.report.impression.empty();
  return out;
}

std::string render_tokens(std::span<const TokenId> tokens, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += vocab.token(tokens[i]);
  }
  return out;
}

}  // namespace clarifid
