#include "clarifid/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "clarifid/errors.hpp"

namespace clarifid {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Shortest text that parses back to the same double.
std::string show(double v) {
  char buf[40];
  const auto end = std::to_chars(buf, buf + sizeof buf, v).ptr;
  return std::string(buf, end);
}
std::string show(bool v) { return v ? "true" : "false"; }
template <class T>
  requires std::is_integral_v<T>
std::string show(T v) {
  return std::to_string(v);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(value) + "'");
}

template <class T>
T parse_integer(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) bad_value(key, value);
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  const std::string s(value);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    bad_value(key, value);
  }
  if (used != s.size()) bad_value(key, value);
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value);
}

std::vector<std::string_view> split_list(std::string_view value) {
  std::vector<std::string_view> parts;
  while (!value.empty()) {
    const auto comma = value.find(',');
    parts.push_back(trim(value.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    value.remove_prefix(comma + 1);
  }
  return parts;
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <class Group, class T>
Field field(std::string key, Group RunConfig::*group, T Group::*member) {
  Field f;
  f.get = [group, member](const RunConfig& c) {
    return show((c.*group).*member);
  };
  f.set = [group, member, key](RunConfig& c, std::string_view v) {
    auto& slot = (c.*group).*member;
    if constexpr (std::is_same_v<T, double>) slot = parse_double(key, v);
    else if constexpr (std::is_same_v<T, bool>) slot = parse_bool(key, v);
    else slot = parse_integer<T>(key, v);
  };
  f.key = std::move(key);
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    using R = RunConfig;
    std::vector<Field> t;
    t.push_back(field("corpus.seed", &R::corpus, &CorpusConfig::seed));
    t.push_back(field("corpus.train_studies", &R::corpus, &CorpusConfig::train_studies));
    t.push_back(field("corpus.val_studies", &R::corpus, &CorpusConfig::val_studies));
    t.push_back(field("corpus.test_studies", &R::corpus, &CorpusConfig::test_studies));
    t.push_back(field("corpus.tokens_per_view", &R::corpus, &CorpusConfig::tokens_per_view));
    t.push_back(field("corpus.feature_dim", &R::corpus, &CorpusConfig::feature_dim));
    t.push_back(field("corpus.sigma_view", &R::corpus, &CorpusConfig::sigma_view));
    t.push_back(field("corpus.template_version", &R::corpus, &CorpusConfig::template_version));
    t.push_back(Field{"corpus.prevalence",
                      [](const R& c) {
                        std::string out;
                        for (std::size_t i = 0; i < c.corpus.prevalence.size(); ++i) {
                          if (i) out += ',';
                          out += show(c.corpus.prevalence[i]);
                        }
                        return out;
                      },
                      [](R& c, std::string_view v) {
                        const auto parts = split_list(v);
                        if (parts.size() != c.corpus.prevalence.size()) {
                          throw ConfigError("corpus.prevalence needs " + std::to_string(kNumPathologies) +
                                            " comma-separated rates");
                        }
                        for (std::size_t i = 0; i < parts.size(); ++i) {
                          c.corpus.prevalence[i] = parse_double("corpus.prevalence", parts[i]);
                        }
                      }});

    t.push_back(field("model.d_model", &R::model, &ModelConfig::d_model));
    t.push_back(field("model.heads", &R::model, &ModelConfig::heads));
    t.push_back(field("model.policy_layers", &R::model, &ModelConfig::policy_layers));
    t.push_back(field("model.value_layers", &R::model, &ModelConfig::value_layers));
    t.push_back(field("model.max_len", &R::model, &ModelConfig::max_len));
    t.push_back(field("model.ffn_mult", &R::model, &ModelConfig::ffn_mult));
    t.push_back(Field{"model.seed", [](const R& c) { return show(c.model_seed); },
                      [](R& c, std::string_view v) { c.model_seed = parse_integer<std::uint64_t>("model.seed", v); }});

    t.push_back(field("pretrain.lr", &R::pretrain, &PretrainConfig::lr));
    t.push_back(field("pretrain.epochs", &R::pretrain, &PretrainConfig::epochs));
    t.push_back(field("pretrain.batch_size", &R::pretrain, &PretrainConfig::batch_size));
    t.push_back(field("pretrain.shuffle_sentences", &R::pretrain, &PretrainConfig::shuffle_sentences));
    t.push_back(field("pretrain.noise_sigma", &R::pretrain, &PretrainConfig::noise_sigma));
    t.push_back(field("pretrain.seed", &R::pretrain, &PretrainConfig::seed));

    t.push_back(field("ppo.clip_eps", &R::ppo, &PPOConfig::clip_eps));
    t.push_back(field("ppo.kl_beta", &R::ppo, &PPOConfig::kl_beta));
    t.push_back(field("ppo.group_size", &R::ppo, &PPOConfig::group_size));
    t.push_back(field("ppo.temperature", &R::ppo, &PPOConfig::temperature));
    t.push_back(field("ppo.lr_start", &R::ppo, &PPOConfig::lr_start));
    t.push_back(field("ppo.lr_peak", &R::ppo, &PPOConfig::lr_peak));
    t.push_back(field("ppo.warmup_iters", &R::ppo, &PPOConfig::warmup_iters));
    t.push_back(field("ppo.iterations", &R::ppo, &PPOConfig::iterations));
    t.push_back(field("ppo.batch_studies", &R::ppo, &PPOConfig::batch_studies));
    t.push_back(field("ppo.accumulation", &R::ppo, &PPOConfig::accumulation));
    t.push_back(field("ppo.gamma", &R::ppo, &PPOConfig::gamma));
    t.push_back(field("ppo.lambda", &R::ppo, &PPOConfig::lambda));
    t.push_back(field("ppo.value_weight", &R::ppo, &PPOConfig::value_weight));
    t.push_back(field("ppo.value_lr_scale", &R::ppo, &PPOConfig::value_lr_scale));
    t.push_back(field("ppo.group_normalize", &R::ppo, &PPOConfig::group_normalize));
    t.push_back(field("ppo.forced_rollouts", &R::ppo, &PPOConfig::forced_rollouts));
    t.push_back(field("ppo.forced_k", &R::ppo, &PPOConfig::forced_k));
    t.push_back(field("ppo.max_len", &R::ppo, &PPOConfig::max_len));
    t.push_back(field("ppo.val_subset", &R::ppo, &PPOConfig::val_subset));
    t.push_back(field("ppo.divergence_limit", &R::ppo, &PPOConfig::divergence_limit));
    t.push_back(field("ppo.seed", &R::ppo, &PPOConfig::seed));

    for (auto [prefix, member] : {std::pair{std::string("decode."), &R::decode},
                                  std::pair{std::string("eval_decode."), &R::eval_decode}}) {
      t.push_back(field(prefix + "k", member, &DecodeConfig::k));
      t.push_back(field(prefix + "candidates", member, &DecodeConfig::candidates));
      t.push_back(field(prefix + "t_find", member, &DecodeConfig::t_find));
      t.push_back(field(prefix + "t_imp", member, &DecodeConfig::t_imp));
      t.push_back(field(prefix + "top_p", member, &DecodeConfig::top_p));
      t.push_back(field(prefix + "max_len", member, &DecodeConfig::max_len));
      t.push_back(field(prefix + "force", member, &DecodeConfig::force));
      t.push_back(field(prefix + "parallel", member, &DecodeConfig::parallel));
      t.push_back(field(prefix + "seed", member, &DecodeConfig::seed));
    }

    t.push_back(Field{"sweep.ks",
                      [](const R& c) {
                        std::string out;
                        for (std::size_t i = 0; i < c.sweep_ks.size(); ++i) {
                          if (i) out += ',';
                          out += std::to_string(c.sweep_ks[i]);
                        }
                        return out;
                      },
                      [](R& c, std::string_view v) {
                        c.sweep_ks.clear();
                        for (auto part : split_list(v)) c.sweep_ks.push_back(parse_integer<std::size_t>("sweep.ks", part));
                      }});
    t.push_back(Field{"paths.data_dir", [](const R& c) { return c.data_dir; },
                      [](R& c, std::string_view v) { c.data_dir = std::string(v); }});
    return t;
  }();
  return table;
}

const Field& find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

RunConfig RunConfig::desk() {
  RunConfig c;
  c.pretrain.lr = 1e-3;
  c.ppo.lr_start = 1e-5;
  c.ppo.lr_peak = 1e-4;
  c.ppo.warmup_iters = 20;
  c.ppo.iterations = 200;
  c.ppo.batch_studies = 2;
  c.ppo.accumulation = 4;
  c.ppo.val_subset = 50;
  c.decode.k = 4;
  c.eval_decode.force = false;
  c.eval_decode.candidates = 1;
  return c;
}

RunConfig RunConfig::parse(std::string_view text) {
  auto c = desk();
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  c.model.feature_dim = c.corpus.feature_dim;
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

void RunConfig::set(std::string_view key, std::string_view value) { find_field(key).set(*this, value); }

std::string RunConfig::get(std::string_view key) const { return find_field(key).get(*this); }

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write config " + path.string());
  out << serialize();
}

void RunConfig::validate() const {
  corpus.validate();
  pretrain.validate();
  ppo.validate();
  decode.validate();
  eval_decode.validate();
  if (sweep_ks.empty()) throw ConfigError("sweep.ks must list at least one k");
}

}  // namespace clarifid
