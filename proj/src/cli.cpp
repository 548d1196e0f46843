#include "clarifid/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "clarifid/checkpoint.hpp"
#include "clarifid/config.hpp"
#include "clarifid/errors.hpp"
#include "clarifid/eval.hpp"

namespace clarifid {

namespace fs = std::filesystem;

namespace {

constexpr char kResolvedConfig[] = "config.resolved.cfg";

RunConfig load_config(const std::string& path) { return path.empty() ? RunConfig::desk() : RunConfig::load(path); }

struct Dataset {
  Vocabulary vocab;
  std::vector<StudyRecord> train, val, test;

  const std::vector<StudyRecord>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw UsageError("unknown split '" + name + "' (expected train, val or test)");
  }
};

Dataset load_dataset(const fs::path& dir, const RunConfig& cfg) {
  if (!fs::is_directory(dir)) throw DataError("data directory " + dir.string() + " does not exist; run gen-data first");
  Dataset d;
  d.vocab = Vocabulary::load(dir / "vocab.txt");
  const auto n = cfg.corpus.tokens_per_view;
  const auto dim = cfg.corpus.feature_dim;
  d.train = read_jsonl(dir / "train.jsonl", n, dim);
  d.val = read_jsonl(dir / "val.jsonl", n, dim);
  d.test = read_jsonl(dir / "test.jsonl", n, dim);
  if (d.train.empty() || d.val.empty()) throw DataError("corpus in " + dir.string() + " is missing its train or val split");
  return d;
}

Model load_model(const fs::path& path, const Vocabulary& vocab) {
  auto model = load_checkpoint(path);
  if (model.config.vocab_size != vocab.size()) {
    throw ConsistencyError("checkpoint vocabulary size " + std::to_string(model.config.vocab_size) +
                           " does not match the corpus vocabulary (" + std::to_string(vocab.size()) + ")");
  }
  return model;
}

void prepare_out_dir(const fs::path& dir, const RunConfig& cfg) {
  fs::create_directories(dir);
  cfg.save(dir / kResolvedConfig);
}

int gen_data(const std::string& config, const std::string& out_dir, std::optional<std::uint64_t> seed, bool force,
             std::ostream& out) {
  auto cfg = load_config(config);
  if (seed) cfg.corpus.seed = *seed;
  const fs::path dir(out_dir);
  const std::vector<std::string> files{"train.jsonl", "val.jsonl", "test.jsonl", "vocab.txt", kResolvedConfig};
  if (!force) {
    for (const auto& f : files) {
      if (fs::exists(dir / f)) {
        throw Error("refusing to overwrite " + (dir / f).string() + " (pass --force to replace it)");
      }
    }
  }
  const auto corpus = generate_corpus(cfg.corpus);
  prepare_out_dir(dir, cfg);
  write_jsonl(dir / "train.jsonl", corpus.train);
  write_jsonl(dir / "val.jsonl", corpus.val);
  write_jsonl(dir / "test.jsonl", corpus.test);
  const auto vocab = build_vocabulary(corpus.train);
  vocab.save(dir / "vocab.txt");
  out << "wrote " << corpus.train.size() << "/" << corpus.val.size() << "/" << corpus.test.size()
      << " studies and " << vocab.size() << " tokens to " << dir.string() << "\n";
  return 0;
}

int pretrain(const std::string& config, const std::string& data, const std::string& out_dir, std::ostream& out) {
  auto cfg = load_config(config);
  const auto d = load_dataset(data, cfg);
  auto mc = cfg.model;
  mc.vocab_size = d.vocab.size();
  const fs::path dir(out_dir);
  prepare_out_dir(dir, cfg);
  const auto result = run_pretraining(Model::init(mc, cfg.model_seed), d.train, d.val, d.vocab, cfg.pretrain,
                                      [&](const EpochLog& e) {
                                        out << "epoch " << e.epoch << " train_loss " << format_number(e.train_loss)
                                            << " val_loss " << format_number(e.val_loss) << "\n";
                                        out.flush();
                                      });
  write_pretrain_log(dir / "pretrain_log.csv", result.log);
  save_checkpoint(dir / "pretrain.ckpt", result.best);
  out << "best epoch " << result.best_epoch << "; checkpoint " << (dir / "pretrain.ckpt").string() << "\n";
  return 0;
}

int ppo_train(const std::string& config, const std::string& init, const std::string& data,
              const std::string& out_dir, std::ostream& out, std::ostream& err) {
  if (init.empty()) {
    throw StageOrderError("ppo-train needs a pretraining checkpoint: run `pretrain` first and pass it with --init");
  }
  auto cfg = load_config(config);
  const auto d = load_dataset(data, cfg);
  const auto pretrained = load_model(init, d.vocab);
  const fs::path dir(out_dir);
  prepare_out_dir(dir, cfg);
  std::ofstream log(dir / "ppo_log.csv", std::ios::binary);
  if (!log) throw LoadError("cannot write " + (dir / "ppo_log.csv").string());
  write_ppo_log_header(log);
  auto state = PPOState::from_pretrained(pretrained, cfg.ppo.value_lr_scale);
  for (std::size_t i = 0; i < cfg.ppo.iterations; ++i) {
    const auto m = train_iteration(state, d.train, d.val, d.vocab, cfg.ppo, cfg.eval_decode);
    write_ppo_log_row(log, m);
    log.flush();
    if (m.aborted) err << "iteration " << m.iter << " aborted: " << m.diagnostic << "\n";
    if (i % 10 == 0 || i + 1 == cfg.ppo.iterations) {
      out << "iter " << m.iter << " reward " << format_number(m.mean_reward) << " val_impression_f1 "
          << format_number(m.val_impression_f1) << " val_findings_f1 " << format_number(m.val_findings_f1) << "\n";
      out.flush();
    }
  }
  save_checkpoint(dir / "ppo.ckpt", state.model);
  out << "checkpoint " << (dir / "ppo.ckpt").string() << "\n";
  return 0;
}

const StudyRecord& find_study(const Dataset& d, const std::string& id) {
  for (const auto* split : {&d.test, &d.val, &d.train}) {
    for (const auto& s : *split) {
      if (s.study_id == id) return s;
    }
  }
  throw DataError("no study with id '" + id + "'");
}

void print_report(std::ostream& out, const Report& r) {
  out << "FINDINGS:";
  for (const auto& s : r.findings) out << " " << join_words(s) << " .";
  out << "\nIMPRESSION: " << join_words(r.impression) << "\n";
}

int generate(const Dataset& d, const Model& model, const std::string& study_id, const DecodeConfig& dc,
             std::ostream& out) {
  const auto& study = find_study(d, study_id);
  const auto bon = generate_report(model.policy, model.value, encode_study(model.encoder, study), dc);
  const auto decoded = decode_sequence(bon.tokens, d.vocab);
  out << "study " << study.study_id << "\n";
  print_report(out, decoded.report);
  out << "candidates:\n";
  for (std::size_t j = 0; j < bon.scores.size(); ++j) {
    const auto& c = bon.candidates[j];
    out << "  " << j << (j == bon.chosen ? " *" : "  ") << " score " << format_number(bon.scores[j]) << " tokens "
        << c.tokens.size() << (c.truncated ? " truncated" : "") << " replaced " << c.replaced << "\n";
  }
  out << "diagnostics: " << (decoded.diagnostics.clean() ? "clean" : decoded.diagnostics.summary()) << "\n";
  out << "labels: " << impression_labels(bon.tokens, d.vocab).to_string() << "\n";
  return 0;
}

int evaluate(const RunConfig& cfg, const Dataset& d, const Model& model, const std::string& split,
             const std::string& out_dir, std::ostream& out) {
  const auto& studies = d.split(split);
  const auto m = evaluate_corpus(model, studies, d.vocab, cfg.decode);
  const fs::path dir(out_dir);
  prepare_out_dir(dir, cfg);
  write_metrics_csv(dir / "metrics.csv", m);
  write_per_class_csv(dir / "per_class_findings.csv", m.findings.ce);
  write_per_class_csv(dir / "per_class_impression.csv", m.impression.ce);
  out << "impression micro F1 " << format_number(m.impression.ce.micro.f1) << ", findings micro F1 "
      << format_number(m.findings.ce.micro.f1) << "\n";
  return 0;
}

std::vector<std::string> split_values(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int sweep(const RunConfig& cfg, const Dataset& d, const Model& model, const std::string& axis,
          const std::string& values, const std::string& out_path, std::ostream& out) {
  const fs::path path(out_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (axis == "k") {
    std::vector<std::size_t> ks = cfg.sweep_ks;
    if (!values.empty()) {
      ks.clear();
      for (const auto& v : split_values(values)) {
        try {
          ks.push_back(std::stoul(v));
        } catch (const std::exception&) {
          throw UsageError("--values for the k axis must be integers, got '" + v + "'");
        }
      }
    }
    const auto rows = sweep_forcing(model, d.test, d.vocab, ks, cfg.decode);
    write_sweep_csv(path, rows);
    out << "wrote " << rows.size() << " rows to " << path.string() << "\n";
  } else if (axis == "temperature") {
    std::vector<std::pair<double, double>> grid = default_temperature_grid();
    if (!values.empty()) {
      grid.clear();
      for (const auto& v : split_values(values)) {
        const auto colon = v.find(':');
        try {
          if (colon == std::string::npos) throw std::invalid_argument(v);
          grid.emplace_back(std::stod(v.substr(0, colon)), std::stod(v.substr(colon + 1)));
        } catch (const std::exception&) {
          throw UsageError("--values for the temperature axis are t_find:t_imp pairs, got '" + v + "'");
        }
      }
    }
    const auto rows = sweep_temperature(model, d.test, d.vocab, grid, cfg.decode);
    write_temperature_csv(path, rows);
    out << "wrote " << rows.size() << " rows to " << path.string() << "\n";
  } else {
    throw UsageError("unknown sweep axis '" + axis + "' (expected k or temperature)");
  }
  if (path.has_parent_path()) cfg.save(path.parent_path() / kResolvedConfig);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Section-aware report generation on a synthetic chest X-ray corpus"};
  app.require_subcommand(1);

  std::string config, data, out_dir, init, checkpoint, study, axis, values, split = "test", pretrained, tuned;
  std::optional<std::uint64_t> seed;
  bool force = false;
  std::optional<std::size_t> k, n;
  std::optional<double> t_find, t_imp, top_p;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus and vocabulary");
  gen->add_option("--config", config, "Run config file");
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_option("--seed", seed, "Override corpus.seed");
  gen->add_flag("--force", force, "Overwrite existing files");

  auto* pre = app.add_subcommand("pretrain", "Section-aware supervised pretraining");
  pre->add_option("--config", config, "Run config file");
  pre->add_option("--data", data, "Corpus directory from gen-data")->required();
  pre->add_option("--out", out_dir, "Output directory")->required();

  auto* ppo = app.add_subcommand("ppo-train", "Impression-reward PPO fine-tuning");
  ppo->add_option("--config", config, "Run config file");
  ppo->add_option("--init", init, "Pretraining checkpoint");
  ppo->add_option("--data", data, "Corpus directory from gen-data")->required();
  ppo->add_option("--out", out_dir, "Output directory")->required();

  auto* gen_report = app.add_subcommand("generate", "Generate one report with best-of-N decoding");
  gen_report->add_option("--config", config, "Run config file");
  gen_report->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  gen_report->add_option("--data", data, "Corpus directory from gen-data")->required();
  gen_report->add_option("--study", study, "Study id")->required();
  gen_report->add_option("--k", k, "Forced <next> tokens");
  gen_report->add_option("--n", n, "Candidates for best-of-N");
  gen_report->add_option("--t-find", t_find, "Findings temperature");
  gen_report->add_option("--t-imp", t_imp, "Impression temperature");
  gen_report->add_option("--p", top_p, "Nucleus threshold");
  gen_report->add_option("--seed", seed, "Decoding seed");

  auto* eval = app.add_subcommand("evaluate", "Score generated reports on a split");
  eval->add_option("--config", config, "Run config file");
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  eval->add_option("--data", data, "Corpus directory from gen-data")->required();
  eval->add_option("--split", split, "train, val or test");
  eval->add_option("--out", out_dir, "Output directory")->required();

  auto* sw = app.add_subcommand("sweep", "Forcing-length or temperature sweep on the test split");
  sw->add_option("--config", config, "Run config file");
  sw->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  sw->add_option("--data", data, "Corpus directory from gen-data")->required();
  sw->add_option("--axis", axis, "k or temperature")->required();
  sw->add_option("--values", values, "Comma-separated k values or t_find:t_imp pairs");
  sw->add_option("--out", out_dir, "Output CSV")->required();

  auto* abl = app.add_subcommand("ablate", "SL / +RL / +FG / +BoN grid on the test split");
  abl->add_option("--config", config, "Run config file");
  abl->add_option("--pretrained", pretrained, "Pretraining checkpoint")->required();
  abl->add_option("--tuned", tuned, "PPO checkpoint")->required();
  abl->add_option("--data", data, "Corpus directory from gen-data")->required();
  abl->add_option("--out", out_dir, "Output CSV")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return gen_data(config, out_dir, seed, force, out);
    if (*pre) return pretrain(config, data, out_dir, out);
    if (*ppo) return ppo_train(config, init, data, out_dir, out, err);

    const auto cfg = load_config(config);
    const auto d = load_dataset(data, cfg);
    if (*gen_report) {
      auto dc = cfg.decode;
      if (k) dc.k = *k;
      if (n) dc.candidates = *n;
      if (t_find) dc.t_find = *t_find;
      if (t_imp) dc.t_imp = *t_imp;
      if (top_p) dc.top_p = *top_p;
      if (seed) dc.seed = *seed;
      dc.validate();
      return generate(d, load_model(checkpoint, d.vocab), study, dc, out);
    }
    if (*eval) return evaluate(cfg, d, load_model(checkpoint, d.vocab), split, out_dir, out);
    if (*sw) return sweep(cfg, d, load_model(checkpoint, d.vocab), axis, values, out_dir, out);
    if (*abl) {
      const auto rows = run_ablation(load_model(pretrained, d.vocab), load_model(tuned, d.vocab), d.test, d.vocab,
                                     cfg.decode);
      const fs::path path(out_dir);
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      write_ablation_csv(path, rows);
      out << "wrote " << rows.size() << " rows to " << path.string() << "\n";
      return 0;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace clarifid
