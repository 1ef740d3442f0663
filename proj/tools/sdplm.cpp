// sdplm: train and audit small recurrent language models under selective
// differential privacy. Subcommands: synth, tokenize, anonymize, train,
// attack, accountant.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdplm/accountant.hpp"
#include "sdplm/attacks.hpp"
#include "sdplm/corpus.hpp"
#include "sdplm/errors.hpp"
#include "sdplm/ledger.hpp"
#include "sdplm/model.hpp"
#include "sdplm/optimizer.hpp"
#include "sdplm/policy.hpp"
#include "sdplm/synth.hpp"
#include "sdplm/tokenizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "sdplm 0.1.0";

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Every command writes one of these next to its outputs.
struct RunManifest {
  std::string command;
  json config;
  uint64_t seed = 0;
  std::vector<std::string> outputs;
  double wall_seconds = 0.0;

  void write(const fs::path& dir) const {
    json j;
    j["tool"] = kToolVersion;
    j["command"] = command;
    j["config"] = config;
    j["seed"] = seed;
    j["outputs"] = outputs;
    j["wall_seconds"] = wall_seconds;
    std::ofstream f(dir / "manifest.json");
    if (!f) throw sdplm::DataError("manifest: cannot write under " + dir.string());
    f << j.dump(2) << "\n";
    for (const auto& path : outputs) {
      if (!fs::exists(path)) {
        throw sdplm::DataError("manifest: declared output missing: " + path);
      }
    }
  }
};

sdplm::Policy resolve_policy(const std::string& name_or_path) {
  if (fs::exists(name_or_path)) return sdplm::Policy::from_json_file(name_or_path);
  return sdplm::Policy::builtin(name_or_path);
}

// ---------------------------------------------------------------- synth ----

struct SynthArgs {
  size_t n = 1000;
  uint64_t seed = 1;
  std::string out_dir = "synth_out";
  size_t vocab_size = 2000;
  double valid_frac = 0.1;
  double test_frac = 0.1;
};

int cmd_synth(const SynthArgs& args) {
  Stopwatch watch;
  fs::create_directories(args.out_dir);
  const auto dialogs = sdplm::synth_dialogs(args.n, args.seed);

  const size_t n_valid = static_cast<size_t>(std::llround(
      args.valid_frac * static_cast<double>(dialogs.size())));
  const size_t n_test = static_cast<size_t>(std::llround(
      args.test_frac * static_cast<double>(dialogs.size())));
  if (n_valid + n_test >= dialogs.size()) {
    throw sdplm::ConfigError("synth: split fractions leave no training data");
  }
  const size_t n_train = dialogs.size() - n_valid - n_test;

  std::vector<sdplm::RawDialog> train_d(dialogs.begin(), dialogs.begin() + n_train);
  std::vector<sdplm::RawDialog> valid_d(dialogs.begin() + n_train,
                                        dialogs.begin() + n_train + n_valid);
  std::vector<sdplm::RawDialog> test_d(dialogs.begin() + n_train + n_valid,
                                       dialogs.end());

  std::vector<std::string> train_texts;
  for (const auto& d : train_d) train_texts.push_back(d.text);
  sdplm::Tokenizer::TrainOptions topt;
  topt.reserved_symbols = {"<num>"};
  const sdplm::Tokenizer tok =
      sdplm::Tokenizer::train(train_texts, args.vocab_size, topt);

  RunManifest manifest;
  manifest.command = "synth";
  manifest.seed = args.seed;
  manifest.config = {{"n", args.n},
                     {"seed", args.seed},
                     {"vocab_size", args.vocab_size},
                     {"valid_frac", args.valid_frac},
                     {"test_frac", args.test_frac}};

  const fs::path dir(args.out_dir);
  tok.save((dir / "tokenizer.json").string());
  manifest.outputs.push_back((dir / "tokenizer.json").string());

  auto emit = [&](const std::vector<sdplm::RawDialog>& split_dialogs,
                  const std::string& split) {
    std::vector<std::string> lines;
    for (const auto& d : split_dialogs) lines.push_back(d.text);
    const fs::path corpus_path = dir / (split + ".txt");
    sdplm::write_lines(corpus_path.string(), lines);
    manifest.outputs.push_back(corpus_path.string());
    const sdplm::Corpus corpus = sdplm::tokenize_dialogs(split_dialogs, tok, split);
    const fs::path spans_path = dir / ("spans_" + split + ".json");
    sdplm::save_pii_spans(spans_path.string(), corpus.pii_spans);
    manifest.outputs.push_back(spans_path.string());
  };
  emit(train_d, "train");
  emit(valid_d, "valid");
  emit(test_d, "test");

  manifest.wall_seconds = watch.seconds();
  manifest.write(dir);
  std::cout << "wrote " << dialogs.size() << " dialogs under " << args.out_dir
            << " (vocab " << tok.vocab_size() << ")\n";
  return 0;
}

// ------------------------------------------------------------- tokenize ----

struct TokenizeArgs {
  std::vector<std::string> inputs;
  size_t vocab_size = 2000;
  std::string out_path = "tokenizer.json";
  std::vector<std::string> reserved;
  bool no_byte_fallback = false;
};

int cmd_tokenize(const TokenizeArgs& args) {
  Stopwatch watch;
  std::vector<std::string> texts;
  for (const auto& path : args.inputs) {
    for (auto& line : sdplm::read_lines(path)) texts.push_back(std::move(line));
  }
  sdplm::Tokenizer::TrainOptions topt;
  topt.byte_fallback = !args.no_byte_fallback;
  topt.reserved_symbols = args.reserved;
  const sdplm::Tokenizer tok = sdplm::Tokenizer::train(texts, args.vocab_size, topt);
  tok.save(args.out_path);

  size_t total_bytes = 0, total_tokens = 0;
  for (const auto& t : texts) {
    total_bytes += t.size();
    total_tokens += tok.encode(t).size();
  }
  RunManifest manifest;
  manifest.command = "tokenize";
  manifest.config = {{"inputs", args.inputs},
                     {"vocab_size", args.vocab_size},
                     {"reserved", args.reserved}};
  manifest.outputs.push_back(args.out_path);
  manifest.wall_seconds = watch.seconds();
  manifest.write(fs::path(args.out_path).parent_path().empty()
                     ? fs::path(".")
                     : fs::path(args.out_path).parent_path());
  std::cout << "vocab " << tok.vocab_size() << ", " << tok.merges().size()
            << " merges, " << static_cast<double>(total_bytes) /
                                  static_cast<double>(std::max<size_t>(1, total_tokens))
            << " bytes/token\n";
  return 0;
}

// ------------------------------------------------------------ anonymize ----

struct AnonymizeArgs {
  std::string input;
  std::string tokenizer_path;
  std::string policy = "digits";
  std::string placeholder = "<num>";
  std::string out_path;
};

int cmd_anonymize(const AnonymizeArgs& args) {
  Stopwatch watch;
  const sdplm::Tokenizer tok = sdplm::Tokenizer::load(args.tokenizer_path);
  const sdplm::Policy policy = resolve_policy(args.policy);
  const auto lines = sdplm::read_lines(args.input);
  const sdplm::Corpus corpus = sdplm::tokenize_texts(lines, tok);
  const sdplm::Corpus anon = sdplm::anonymize(corpus, policy, tok, args.placeholder);
  std::vector<std::string> out_lines;
  out_lines.reserve(anon.records.size());
  for (const auto& rec : anon.records) out_lines.push_back(tok.decode(rec.ids));
  sdplm::write_lines(args.out_path, out_lines);

  RunManifest manifest;
  manifest.command = "anonymize";
  manifest.config = {{"input", args.input},
                     {"tokenizer", args.tokenizer_path},
                     {"policy", args.policy},
                     {"placeholder", args.placeholder}};
  manifest.outputs.push_back(args.out_path);
  manifest.wall_seconds = watch.seconds();
  manifest.write(fs::path(args.out_path).parent_path().empty()
                     ? fs::path(".")
                     : fs::path(args.out_path).parent_path());
  std::cout << "anonymized " << anon.records.size() << " records -> "
            << args.out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------- train ----

struct TrainArgs {
  std::string config_path;
  std::string preset;
  std::string out_dir = "run_out";
  int seeds = 1;
  // Flag overrides; unset optionals fall back to the config file.
  std::optional<std::string> regime, policy, train_path, valid_path, test_path,
      tokenizer_path;
  std::optional<double> lr, sigma, clip, delta;
  std::optional<int64_t> steps, eval_interval;
  std::optional<int> group_size, max_seq_len, embedding_dim, hidden_dim;
  std::optional<uint64_t> seed;
};

struct ResolvedTrain {
  sdplm::TrainConfig train_cfg;
  sdplm::PrivacySpec privacy;
  sdplm::ModelConfig model_cfg;
  std::string train_path, valid_path, test_path, tokenizer_path;
  json snapshot;
};

void apply_preset(const std::string& name, sdplm::TrainConfig& cfg,
                  sdplm::PrivacySpec& spec) {
  if (name == "wikitext-sdp") {
    cfg.regime = sdplm::Regime::kSdpsgd;
    spec = {0.5, 1e-3, 8e-5, -1, -1};
  } else if (name == "wikitext-dp") {
    cfg.regime = sdplm::Regime::kDpsgd;
    spec = {0.5, 0.10, 8e-5, -1, -1};
  } else if (name == "dialog-sdp") {
    cfg.regime = sdplm::Regime::kSdpsgd;
    spec = {0.7, 5e-3, 8e-5, -1, -1};
  } else if (name == "dialog-dp") {
    cfg.regime = sdplm::Regime::kDpsgd;
    spec = {0.6, 0.01, 8e-5, -1, -1};
  } else {
    throw sdplm::ConfigError("train: unknown preset '" + name + "'");
  }
}

ResolvedTrain resolve_train(const TrainArgs& args) {
  ResolvedTrain r;
  json cfg = json::object();
  if (!args.config_path.empty()) {
    std::ifstream f(args.config_path);
    if (!f) throw sdplm::DataError("train: cannot read config " + args.config_path);
    try {
      f >> cfg;
    } catch (const json::exception& e) {
      throw sdplm::ConfigError(std::string("train: invalid config JSON: ") + e.what());
    }
  }
  if (!args.preset.empty()) apply_preset(args.preset, r.train_cfg, r.privacy);

  const json data = cfg.value("data", json::object());
  const json model = cfg.value("model", json::object());
  const json training = cfg.value("train", json::object());
  const json privacy = cfg.value("privacy", json::object());

  if (cfg.contains("regime")) {
    r.train_cfg.regime = sdplm::regime_from_string(cfg["regime"].get<std::string>());
  }
  r.train_path = data.value("train", "");
  r.valid_path = data.value("valid", "");
  r.test_path = data.value("test", "");
  r.tokenizer_path = data.value("tokenizer", "");

  r.model_cfg.embedding_dim = model.value("embedding_dim", 64);
  r.model_cfg.hidden_dim = model.value("hidden_dim", 64);
  r.model_cfg.tie_embeddings = model.value("tie_embeddings", false);
  r.model_cfg.init_scale = model.value("init_scale", 0.1);

  r.train_cfg.lr = training.value("lr", r.train_cfg.lr);
  r.train_cfg.lr_anneal = training.value("lr_anneal", r.train_cfg.lr_anneal);
  r.train_cfg.anneal_factor = training.value("anneal_factor", 4.0);
  r.train_cfg.group_size = training.value("group_size", r.train_cfg.group_size);
  r.train_cfg.max_seq_len = training.value("max_seq_len", r.train_cfg.max_seq_len);
  r.train_cfg.steps = training.value("steps", r.train_cfg.steps);
  r.train_cfg.eval_interval =
      training.value("eval_interval", r.train_cfg.eval_interval);
  r.train_cfg.policy_name = training.value("policy", r.train_cfg.policy_name);
  r.train_cfg.placeholder = training.value("placeholder", r.train_cfg.placeholder);
  r.train_cfg.seed = training.value("seed", uint64_t{1});

  if (privacy.contains("sigma")) r.privacy.sigma = privacy["sigma"].get<double>();
  if (privacy.contains("clip")) r.privacy.clip = privacy["clip"].get<double>();
  if (privacy.contains("delta")) r.privacy.delta = privacy["delta"].get<double>();
  r.privacy.state_clip = privacy.value("state_clip", r.privacy.state_clip);
  r.privacy.state_sigma = privacy.value("state_sigma", r.privacy.state_sigma);

  // Flags win over both preset and file.
  if (args.regime) r.train_cfg.regime = sdplm::regime_from_string(*args.regime);
  if (args.policy) r.train_cfg.policy_name = *args.policy;
  if (args.train_path) r.train_path = *args.train_path;
  if (args.valid_path) r.valid_path = *args.valid_path;
  if (args.test_path) r.test_path = *args.test_path;
  if (args.tokenizer_path) r.tokenizer_path = *args.tokenizer_path;
  if (args.lr) r.train_cfg.lr = *args.lr;
  if (args.sigma) r.privacy.sigma = *args.sigma;
  if (args.clip) r.privacy.clip = *args.clip;
  if (args.delta) r.privacy.delta = *args.delta;
  if (args.steps) r.train_cfg.steps = *args.steps;
  if (args.eval_interval) r.train_cfg.eval_interval = *args.eval_interval;
  if (args.group_size) r.train_cfg.group_size = *args.group_size;
  if (args.max_seq_len) r.train_cfg.max_seq_len = *args.max_seq_len;
  if (args.embedding_dim) r.model_cfg.embedding_dim = *args.embedding_dim;
  if (args.hidden_dim) r.model_cfg.hidden_dim = *args.hidden_dim;
  if (args.seed) r.train_cfg.seed = *args.seed;

  // No-DP regimes anneal by default unless explicitly configured.
  if (!training.contains("lr_anneal") && !args.preset.empty()) {
    r.train_cfg.lr_anneal = false;
  } else if (!training.contains("lr_anneal")) {
    r.train_cfg.lr_anneal = (r.train_cfg.regime == sdplm::Regime::kNoDp ||
                             r.train_cfg.regime == sdplm::Regime::kAnon);
  }

  if (r.train_path.empty() || r.valid_path.empty() || r.tokenizer_path.empty()) {
    throw sdplm::ConfigError(
        "train: data.train, data.valid and data.tokenizer are required");
  }

  r.snapshot = {{"regime", sdplm::to_string(r.train_cfg.regime)},
                {"preset", args.preset},
                {"data",
                 {{"train", r.train_path},
                  {"valid", r.valid_path},
                  {"test", r.test_path},
                  {"tokenizer", r.tokenizer_path}}},
                {"model",
                 {{"embedding_dim", r.model_cfg.embedding_dim},
                  {"hidden_dim", r.model_cfg.hidden_dim},
                  {"tie_embeddings", r.model_cfg.tie_embeddings},
                  {"init_scale", r.model_cfg.init_scale}}},
                {"train",
                 {{"lr", r.train_cfg.lr},
                  {"lr_anneal", r.train_cfg.lr_anneal},
                  {"anneal_factor", r.train_cfg.anneal_factor},
                  {"group_size", r.train_cfg.group_size},
                  {"max_seq_len", r.train_cfg.max_seq_len},
                  {"steps", r.train_cfg.steps},
                  {"eval_interval", r.train_cfg.eval_interval},
                  {"policy", r.train_cfg.policy_name},
                  {"placeholder", r.train_cfg.placeholder},
                  {"seed", r.train_cfg.seed}}},
                {"privacy",
                 {{"sigma", r.privacy.sigma},
                  {"clip", r.privacy.clip},
                  {"delta", r.privacy.delta},
                  {"state_clip", r.privacy.state_clip},
                  {"state_sigma", r.privacy.state_sigma}}}};
  return r;
}

int cmd_train(const TrainArgs& args) {
  Stopwatch watch;
  ResolvedTrain r = resolve_train(args);
  const sdplm::Tokenizer tok = sdplm::Tokenizer::load(r.tokenizer_path);
  r.model_cfg.vocab_size = static_cast<int>(tok.vocab_size());

  const sdplm::Corpus train_corpus =
      sdplm::tokenize_texts(sdplm::read_lines(r.train_path), tok, "train");
  const sdplm::Corpus valid_corpus =
      sdplm::tokenize_texts(sdplm::read_lines(r.valid_path), tok, "valid");
  std::optional<sdplm::Corpus> test_corpus;
  if (!r.test_path.empty()) {
    test_corpus = sdplm::tokenize_texts(sdplm::read_lines(r.test_path), tok, "test");
  }
  const sdplm::Policy policy = resolve_policy(r.train_cfg.policy_name);

  fs::create_directories(args.out_dir);
  RunManifest manifest;
  manifest.command = "train";
  manifest.config = r.snapshot;
  manifest.seed = r.train_cfg.seed;

  std::vector<json> per_seed;
  for (int s = 0; s < args.seeds; ++s) {
    sdplm::TrainConfig cfg = r.train_cfg;
    cfg.seed = r.train_cfg.seed + static_cast<uint64_t>(s);
    const fs::path seed_dir =
        args.seeds == 1 ? fs::path(args.out_dir)
                        : fs::path(args.out_dir) / ("seed" + std::to_string(s));
    fs::create_directories(seed_dir);

    sdplm::TrainResult result = sdplm::train(train_corpus, valid_corpus, policy,
                                             tok, r.model_cfg, cfg, r.privacy);
    const std::string ckpt = (seed_dir / "model.ckpt").string();
    const std::string metrics = (seed_dir / "metrics.jsonl").string();
    const std::string ledger_path = (seed_dir / "ledger.jsonl").string();
    sdplm::save_checkpoint(result.model, ckpt);
    sdplm::save_trace(metrics, result.trace);
    result.ledger.save(ledger_path);
    manifest.outputs.insert(manifest.outputs.end(), {ckpt, metrics, ledger_path});

    json row;
    row["seed"] = cfg.seed;
    row["final_valid_ppl"] = result.trace.empty() ? 0.0 : result.trace.back().ppl;
    if (!result.trace.empty() && result.trace.back().epsilon) {
      row["epsilon"] = *result.trace.back().epsilon;
    } else {
      row["epsilon"] = nullptr;
    }
    if (test_corpus) {
      std::vector<sdplm::PrivacyMask> test_masks =
          policy.mask_corpus(*test_corpus, tok);
      const sdplm::PplReport rep =
          sdplm::evaluate(result.model, *test_corpus, &test_masks);
      row["test_ppl"] = rep.ppl;
      row["test_private_ppl"] = rep.private_ppl;
    }
    per_seed.push_back(row);
    std::cout << "seed " << cfg.seed << ": valid ppl "
              << row["final_valid_ppl"].get<double>() << "\n";
  }

  if (args.seeds > 1) {
    auto mean_std = [&](const char* key) {
      double mean = 0.0, count = 0.0;
      for (const auto& row : per_seed) {
        if (row.contains(key) && row[key].is_number()) {
          mean += row[key].get<double>();
          count += 1.0;
        }
      }
      if (count > 0) mean /= count;
      double var = 0.0;
      for (const auto& row : per_seed) {
        if (row.contains(key) && row[key].is_number()) {
          const double d = row[key].get<double>() - mean;
          var += d * d;
        }
      }
      if (count > 1) var /= (count - 1.0);
      return std::make_pair(mean, std::sqrt(var));
    };
    json agg;
    agg["runs"] = per_seed;
    auto [vm, vs] = mean_std("final_valid_ppl");
    agg["valid_ppl_mean"] = vm;
    agg["valid_ppl_std"] = vs;
    if (test_corpus) {
      auto [tm, ts] = mean_std("test_ppl");
      agg["test_ppl_mean"] = tm;
      agg["test_ppl_std"] = ts;
    }
    const std::string agg_path =
        (fs::path(args.out_dir) / "aggregate.json").string();
    std::ofstream f(agg_path);
    f << agg.dump(2) << "\n";
    manifest.outputs.push_back(agg_path);
  }

  manifest.wall_seconds = watch.seconds();
  manifest.write(args.out_dir);
  return 0;
}

// --------------------------------------------------------------- attack ----

struct AttackArgs {
  std::vector<std::string> checkpoints;
  std::string tokenizer_path;
  std::string valid_path;
  std::string out_dir = "reports";
  std::string canary_template;
  std::string canary_fill;
  std::string canary_alphabet = "0123456789";
  uint64_t enum_cap = 10'000'000;
  uint64_t sample_size = 200'000;
  std::string members_path;
  std::string nonmembers_path;
  bool two_stage = false;
  int subset_size = 300;
};

int cmd_attack(const AttackArgs& args) {
  Stopwatch watch;
  const sdplm::Tokenizer tok = sdplm::Tokenizer::load(args.tokenizer_path);
  const sdplm::Corpus valid =
      sdplm::tokenize_texts(sdplm::read_lines(args.valid_path), tok, "valid");

  sdplm::SweepConfig config;
  if (!args.canary_template.empty()) {
    sdplm::CanarySpec spec;
    spec.template_text = args.canary_template;
    spec.fill = args.canary_fill;
    spec.alphabet = args.canary_alphabet;
    spec.repetitions = 1;  // scoring only; insertion happened at data prep
    spec.validate();
    config.canary = spec;
    config.exposure_options.enumeration_cap = args.enum_cap;
    config.exposure_options.sample_size = args.sample_size;
  }
  if (!args.members_path.empty() || !args.nonmembers_path.empty()) {
    config.members = sdplm::read_lines(args.members_path);
    config.nonmembers = sdplm::read_lines(args.nonmembers_path);
    config.membership_options.two_stage = args.two_stage;
    config.membership_options.subset_size = static_cast<size_t>(args.subset_size);
  }

  const auto rows = sdplm::attack_sweep(args.checkpoints, tok, valid, config);

  fs::create_directories(args.out_dir);
  json report = json::array();
  for (const auto& row : rows) {
    json j;
    j["checkpoint"] = row.checkpoint;
    j["valid_ppl"] = row.valid_ppl;
    if (row.exposure) j["exposure"] = *row.exposure;
    if (row.rank) j["rank"] = *row.rank;
    if (row.membership_accuracy) j["membership_accuracy"] = *row.membership_accuracy;
    j["config"] = {{"canary_template", args.canary_template},
                   {"canary_alphabet", args.canary_alphabet},
                   {"two_stage", args.two_stage}};
    report.push_back(j);
  }
  const std::string report_path =
      (fs::path(args.out_dir) / "attack_report.json").string();
  {
    std::ofstream f(report_path);
    f << report.dump(2) << "\n";
  }
  const std::string csv_path = (fs::path(args.out_dir) / "sweep.csv").string();
  {
    std::ofstream f(csv_path);
    f << sdplm::sweep_to_csv(rows);
  }

  RunManifest manifest;
  manifest.command = "attack";
  manifest.config = {{"checkpoints", args.checkpoints},
                     {"tokenizer", args.tokenizer_path},
                     {"valid", args.valid_path}};
  manifest.outputs = {report_path, csv_path};
  manifest.wall_seconds = watch.seconds();
  manifest.write(args.out_dir);
  std::cout << sdplm::sweep_to_csv(rows);
  return 0;
}

// ----------------------------------------------------------- accountant ----

struct AccountantArgs {
  double sigma = 0.0;
  double q = 0.0;
  int64_t steps = 0;
  double delta = 1e-5;
  int mechanisms_per_step = 1;
  std::string ledger_path;
};

int cmd_accountant(const AccountantArgs& args) {
  sdplm::RdpCurve curve;
  if (!args.ledger_path.empty()) {
    const sdplm::PrivacyLedger ledger = sdplm::PrivacyLedger::load(args.ledger_path);
    curve = sdplm::compose(ledger);
    std::cout << "ledger entries: " << ledger.size() << "\n";
  } else {
    curve.orders = sdplm::default_orders();
    curve.eps_alpha.assign(curve.orders.size(), 0.0);
    if (args.steps > 0 && args.mechanisms_per_step > 0) {
      const sdplm::RdpCurve one = sdplm::rdp_subsampled_gaussian(args.q, args.sigma);
      const double count = static_cast<double>(args.steps) *
                           static_cast<double>(args.mechanisms_per_step);
      for (size_t i = 0; i < curve.eps_alpha.size(); ++i) {
        curve.eps_alpha[i] = count * one.eps_alpha[i];
      }
    }
  }
  const sdplm::EpsilonResult res = sdplm::to_eps_delta(curve, args.delta);
  std::cout << "epsilon = " << res.epsilon << " (delta = " << args.delta
            << ", alpha = " << res.best_order << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective-DP language model toolkit"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dialog corpus");
  synth->add_option("--n", synth_args.n, "Number of dialogs");
  synth->add_option("--seed", synth_args.seed, "Root seed");
  synth->add_option("--out", synth_args.out_dir, "Output directory");
  synth->add_option("--vocab-size", synth_args.vocab_size, "BPE vocabulary size");
  synth->add_option("--valid-frac", synth_args.valid_frac, "Validation fraction");
  synth->add_option("--test-frac", synth_args.test_frac, "Test fraction");

  TokenizeArgs tok_args;
  auto* tokenize = app.add_subcommand("tokenize", "Train a BPE tokenizer");
  tokenize->add_option("--input", tok_args.inputs, "Input text file(s)")->required();
  tokenize->add_option("--vocab-size", tok_args.vocab_size, "Vocabulary size");
  tokenize->add_option("--out", tok_args.out_path, "Output tokenizer path");
  tokenize->add_option("--reserve", tok_args.reserved, "Reserved symbol(s)");
  tokenize->add_flag("--no-byte-fallback", tok_args.no_byte_fallback,
                     "Restrict the alphabet to observed bytes");

  AnonymizeArgs anon_args;
  auto* anonymize = app.add_subcommand("anonymize", "Mask sensitive tokens");
  anonymize->add_option("--input", anon_args.input, "Input corpus")->required();
  anonymize->add_option("--tokenizer", anon_args.tokenizer_path, "Tokenizer path")
      ->required();
  anonymize->add_option("--policy", anon_args.policy, "Policy name or JSON path");
  anonymize->add_option("--placeholder", anon_args.placeholder, "Placeholder symbol");
  anonymize->add_option("--out", anon_args.out_path, "Output corpus")->required();

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a language model");
  train->add_option("--config", train_args.config_path, "Config JSON");
  train->add_option("--preset", train_args.preset,
                    "wikitext-sdp | wikitext-dp | dialog-sdp | dialog-dp");
  train->add_option("--out", train_args.out_dir, "Run directory");
  train->add_option("--seeds", train_args.seeds, "Number of seeds to run");
  auto opt = [&](const char* name, auto& target, const char* help) {
    train->add_option(name, target, help);
  };
  opt("--regime", train_args.regime, "nodp | dpsgd | sdpsgd | anon");
  opt("--policy", train_args.policy, "Policy name or JSON path");
  opt("--train-data", train_args.train_path, "Training corpus");
  opt("--valid-data", train_args.valid_path, "Validation corpus");
  opt("--test-data", train_args.test_path, "Test corpus");
  opt("--tokenizer", train_args.tokenizer_path, "Tokenizer path");
  opt("--lr", train_args.lr, "Learning rate");
  opt("--sigma", train_args.sigma, "Noise multiplier");
  opt("--clip", train_args.clip, "Clipping bound C");
  opt("--delta", train_args.delta, "Target delta");
  opt("--steps", train_args.steps, "Training steps");
  opt("--eval-interval", train_args.eval_interval, "Steps between evals");
  opt("--group-size", train_args.group_size, "Expected batch size L");
  opt("--max-seq-len", train_args.max_seq_len, "BPTT window K");
  opt("--embedding-dim", train_args.embedding_dim, "Embedding width");
  opt("--hidden-dim", train_args.hidden_dim, "Hidden width");
  opt("--seed", train_args.seed, "Root seed");

  AttackArgs attack_args;
  auto* attack = app.add_subcommand("attack", "Audit trained checkpoints");
  attack->add_option("--checkpoint", attack_args.checkpoints, "Checkpoint(s)")
      ->required();
  attack->add_option("--tokenizer", attack_args.tokenizer_path, "Tokenizer path")
      ->required();
  attack->add_option("--valid-data", attack_args.valid_path, "Validation corpus")
      ->required();
  attack->add_option("--out", attack_args.out_dir, "Report directory");
  attack->add_option("--canary-template", attack_args.canary_template,
                     "Canary template with # slots");
  attack->add_option("--canary-fill", attack_args.canary_fill, "True fill");
  attack->add_option("--canary-alphabet", attack_args.canary_alphabet,
                     "Slot alphabet");
  attack->add_option("--enum-cap", attack_args.enum_cap,
                     "Full enumeration cap on |R|");
  attack->add_option("--sample-size", attack_args.sample_size,
                     "Sample size above the cap");
  attack->add_option("--members", attack_args.members_path, "Member secrets file");
  attack->add_option("--nonmembers", attack_args.nonmembers_path,
                     "Decoy secrets file");
  attack->add_flag("--two-stage", attack_args.two_stage,
                   "Two-stage membership inference");
  attack->add_option("--subset-size", attack_args.subset_size,
                     "Second-stage subset size");

  AccountantArgs acct_args;
  auto* accountant = app.add_subcommand("accountant", "Compute (epsilon, delta)");
  accountant->add_option("--sigma", acct_args.sigma, "Noise multiplier");
  accountant->add_option("--q", acct_args.q, "Sampling rate");
  accountant->add_option("--steps", acct_args.steps, "Mechanism steps");
  accountant->add_option("--delta", acct_args.delta, "Target delta");
  accountant->add_option("--mechanisms-per-step", acct_args.mechanisms_per_step,
                         "Mechanism invocations per step");
  accountant->add_option("--ledger", acct_args.ledger_path, "Ledger JSONL file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(synth_args);
    if (tokenize->parsed()) return cmd_tokenize(tok_args);
    if (anonymize->parsed()) return cmd_anonymize(anon_args);
    if (train->parsed()) return cmd_train(train_args);
    if (attack->parsed()) return cmd_attack(attack_args);
    if (accountant->parsed()) return cmd_accountant(acct_args);
  } catch (const sdplm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const sdplm::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 4;
  } catch (const sdplm::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const sdplm::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
