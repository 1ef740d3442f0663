#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "sdplm/errors.hpp"
#include "sdplm/ledger.hpp"
#include "sdplm/model.hpp"
#include "sdplm/optimizer.hpp"
#include "sdplm/policy.hpp"
#include "sdplm/rng.hpp"
#include "sdplm/synth.hpp"
#include "sdplm/tokenizer.hpp"

using namespace sdplm;

namespace {

struct Fixture {
  Tokenizer tok;
  Corpus train_corpus;
  Corpus valid_corpus;

  static Fixture make(size_t n_dialogs = 60, uint64_t seed = 5,
                      size_t vocab = 500) {
    const auto dialogs = synth_dialogs(n_dialogs, seed);
    std::vector<std::string> texts;
    for (const auto& d : dialogs) texts.push_back(d.text);
    Tokenizer::TrainOptions opt;
    opt.reserved_symbols = {"<num>"};
    Fixture f{Tokenizer::train(texts, vocab, opt), {}, {}};
    const size_t n_valid = n_dialogs / 6;
    std::vector<RawDialog> train_d(dialogs.begin(), dialogs.end() - n_valid);
    std::vector<RawDialog> valid_d(dialogs.end() - n_valid, dialogs.end());
    f.train_corpus = tokenize_dialogs(train_d, f.tok, "train");
    f.valid_corpus = tokenize_dialogs(valid_d, f.tok, "valid");
    return f;
  }

  ModelConfig model_cfg(int dim = 24) const {
    ModelConfig cfg;
    cfg.vocab_size = static_cast<int>(tok.vocab_size());
    cfg.embedding_dim = dim;
    cfg.hidden_dim = dim;
    return cfg;
  }
};

bool same_params(const Parameters& a, const Parameters& b) {
  Parameters diff = a;
  diff.add_scaled(b, -1.0);
  bool zero = true;
  diff.for_each_array([&](const char*, std::span<const double> arr) {
    for (double v : arr) {
      if (v != 0.0) zero = false;
    }
  });
  return zero;
}

ModelState tiny_model(int vocab, uint64_t seed) {
  ModelConfig cfg;
  cfg.vocab_size = vocab;
  cfg.embedding_dim = 6;
  cfg.hidden_dim = 5;
  cfg.seed = seed;
  return init_model(cfg);
}

Parameters random_grad(const ModelConfig& cfg, Rng& rng, double scale) {
  Parameters g = Parameters::shaped(cfg);
  g.for_each_array([&](const char*, std::span<double> arr) {
    for (double& v : arr) v = rng.uniform(-scale, scale);
  });
  return g;
}

}  // namespace

TEST_CASE("clip_to_norm mechanics") {
  ModelConfig cfg;
  cfg.vocab_size = 8;
  cfg.embedding_dim = 4;
  cfg.hidden_dim = 4;
  Rng rng(2);

  // Norm 10C clips to exactly C.
  Parameters g = random_grad(cfg, rng, 1.0);
  const double norm = g.l2_norm();
  g.scale(10.0 / norm);  // norm 10
  const double pre = clip_to_norm(g, 1.0);
  CHECK(pre == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(g.l2_norm() == doctest::Approx(1.0).epsilon(1e-12));

  // Gradients inside the ball are bit-identical after clipping.
  Parameters small = random_grad(cfg, rng, 1e-3);
  Parameters copy = small;
  clip_to_norm(small, 1.0);
  CHECK(same_params(small, copy));
}

TEST_CASE("sgd_step with zero lr is a no-op") {
  ModelState model = tiny_model(9, 3);
  const Parameters before = model.params;
  Rng rng(4);
  Parameters g = random_grad(model.config, rng, 0.5);
  sgd_step(model, g, 0.0);
  CHECK(same_params(model.params, before));
}

TEST_CASE("sgd_step descends a quadratic surrogate") {
  // One-parameter sanity harness: loss = 0.5 * w^2 via gradient w.
  ModelState model = tiny_model(4, 5);
  model.params.fill_zero();
  model.params.lstm_b[0] = 3.0;
  Parameters g = Parameters::shaped(model.config);
  g.lstm_b[0] = model.params.lstm_b[0];
  sgd_step(model, g, 0.1);
  CHECK(model.params.lstm_b[0] == doctest::Approx(2.7));
  CHECK(std::abs(model.params.lstm_b[0]) < 3.0);
}

TEST_CASE("private_step equals the hand-computed mechanism") {
  ModelState model = tiny_model(7, 9);
  const Parameters before = model.params;
  ModelConfig cfg = model.config;

  Rng grad_rng(11);
  std::vector<Parameters> per_sample;
  per_sample.push_back(random_grad(cfg, grad_rng, 2.0));
  per_sample.push_back(random_grad(cfg, grad_rng, 0.001));
  std::vector<Parameters> expected_grads = per_sample;  // keep copies

  PrivacySpec spec;
  spec.sigma = 0.7;
  spec.clip = 0.05;
  spec.delta = 1e-5;
  PrivacyLedger ledger;
  Rng noise(derive_seed(123, "noise"));
  private_step(model, per_sample, spec, 0.25, 0.5, noise, ledger, 7);

  // Recompute: clip both, sum, add the same noise stream, average, descend.
  Rng noise2(derive_seed(123, "noise"));
  for (auto& g : expected_grads) clip_to_norm(g, spec.clip);
  Parameters sum = Parameters::shaped(cfg);
  sum.add_scaled(expected_grads[0], 1.0);
  sum.add_scaled(expected_grads[1], 1.0);
  sum.for_each_array([&](const char*, std::span<double> arr) {
    std::vector<double> xi(arr.size());
    noise2.gaussian_fill(xi);
    for (size_t i = 0; i < arr.size(); ++i) {
      arr[i] += spec.sigma * spec.clip * xi[i];
    }
  });
  sum.scale(0.5);
  Parameters expected = before;
  expected.add_scaled(sum, -0.5);
  CHECK(same_params(model.params, expected));

  REQUIRE(ledger.size() == 1);
  CHECK(ledger.entries[0].mechanism == LedgerEntry::Mechanism::kGradientNoise);
  CHECK(ledger.entries[0].q == 0.25);
  CHECK(ledger.entries[0].sigma == 0.7);
  CHECK(ledger.entries[0].step == 7);

  // Empty segment: no update, no entry.
  std::vector<Parameters> none;
  const Parameters snapshot = model.params;
  private_step(model, none, spec, 0.25, 0.5, noise, ledger, 8);
  CHECK(ledger.size() == 1);
  CHECK(same_params(model.params, snapshot));
}

TEST_CASE("private_step degenerates to sgd on the mean without noise") {
  // sigma -> 0 and a huge clip bound: the update equals plain SGD on the
  // mean of the per-record gradients.
  ModelState model = tiny_model(7, 13);
  ModelState twin = model;
  ModelConfig cfg = model.config;
  Rng grad_rng(17);
  std::vector<Parameters> per_sample = {random_grad(cfg, grad_rng, 1.0),
                                        random_grad(cfg, grad_rng, 1.0)};
  Parameters mean = Parameters::shaped(cfg);
  mean.add_scaled(per_sample[0], 0.5);
  mean.add_scaled(per_sample[1], 0.5);

  PrivacySpec spec;
  spec.sigma = 1e-300;  // validated positive, numerically zero noise
  spec.clip = 1e9;
  spec.delta = 1e-5;
  PrivacyLedger ledger;
  Rng noise(derive_seed(5, "noise"));
  private_step(model, per_sample, spec, 1.0, 0.3, noise, ledger, 1);
  sgd_step(twin, mean, 0.3);

  Parameters diff = model.params;
  diff.add_scaled(twin.params, -1.0);
  CHECK(diff.l2_norm() < 1e-10);
}

TEST_CASE("noise_states clips then noises each lane") {
  PrivacySpec spec;
  spec.sigma = 0.5;
  spec.clip = 2.0;
  spec.delta = 1e-5;

  // A zero state comes back as pure noise with std sigma * clip.
  LaneState lane;
  lane.h.assign(5000, 0.0);
  lane.c.assign(5000, 0.0);
  std::vector<LaneState*> lanes = {&lane};
  PrivacyLedger ledger;
  Rng noise(derive_seed(21, "noise"));
  noise_states(lanes, spec, 0.1, noise, ledger, 3);

  double sq = 0.0;
  for (double v : lane.h) sq += v * v;
  for (double v : lane.c) sq += v * v;
  const double std_dev = std::sqrt(sq / 10000.0);
  CHECK(std_dev == doctest::Approx(spec.sigma * spec.clip).epsilon(0.03));
  REQUIRE(ledger.size() == 1);
  CHECK(ledger.entries[0].mechanism == LedgerEntry::Mechanism::kStateNoise);

  // A state with norm 5C is clipped to exactly C before noising.
  LaneState big;
  big.h.assign(16, 0.0);
  big.c.assign(16, 0.0);
  for (size_t i = 0; i < 16; ++i) big.h[i] = 1.0;
  const double norm5 = 5.0 * spec.clip;
  for (double& v : big.h) v *= norm5 / 4.0;  // ||h|| = 4 before scaling
  PrivacySpec exact = spec;
  exact.state_sigma = 1e-300;  // isolate the clipping
  std::vector<LaneState*> big_lanes = {&big};
  noise_states(big_lanes, exact, 0.1, noise, ledger, 4);
  double bsq = 0.0;
  for (double v : big.h) bsq += v * v;
  CHECK(std::sqrt(bsq) == doctest::Approx(spec.clip).epsilon(1e-9));
}

TEST_CASE("privacy spec validation") {
  PrivacySpec spec;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.sigma = 0.5;
  spec.clip = 0.0;
  spec.delta = 1e-5;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.clip = 0.1;
  spec.delta = 1.5;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.delta = 1e-5;
  CHECK_NOTHROW(spec.validate());
  CHECK(spec.resolved_state_clip() == 0.1);
  CHECK(spec.resolved_state_sigma() == 0.5);
  spec.state_clip = 0.2;
  spec.state_sigma = 0.9;
  CHECK(spec.resolved_state_clip() == 0.2);
  CHECK(spec.resolved_state_sigma() == 0.9);
}

TEST_CASE("train rejects inconsistent configurations") {
  Fixture f = Fixture::make(24, 7, 400);
  TrainConfig cfg;
  cfg.regime = Regime::kSdpsgd;
  cfg.steps = 2;
  cfg.group_size = 4;
  PrivacySpec bad;  // zero sigma
  CHECK_THROWS_AS(train(f.train_corpus, f.valid_corpus, Policy::builtin("digits"),
                        f.tok, f.model_cfg(), cfg, bad),
                  ConfigError);

  TrainConfig huge = cfg;
  huge.group_size = 100000;
  PrivacySpec ok{0.5, 0.1, 1e-5, -1, -1};
  CHECK_THROWS_AS(train(f.train_corpus, f.valid_corpus, Policy::builtin("digits"),
                        f.tok, f.model_cfg(), huge, ok),
                  ConfigError);
}

TEST_CASE("sdpsgd with an all-ones mask reproduces nodp bit-for-bit") {
  Fixture f = Fixture::make(40, 9, 420);
  TrainConfig cfg;
  cfg.regime = Regime::kNoDp;
  cfg.lr = 1.0;
  cfg.lr_anneal = false;
  cfg.group_size = 6;
  cfg.max_seq_len = 24;
  cfg.steps = 30;
  cfg.eval_interval = 10;
  cfg.seed = 77;
  PrivacySpec unused;

  TrainResult nodp = train(f.train_corpus, f.valid_corpus,
                           Policy::builtin("digits"), f.tok, f.model_cfg(), cfg,
                           unused);

  TrainConfig sdp_cfg = cfg;
  sdp_cfg.regime = Regime::kSdpsgd;
  PrivacySpec spec{0.5, 0.1, 1e-5, -1, -1};
  TrainResult sdp = train(f.train_corpus, f.valid_corpus, Policy::builtin("none"),
                          f.tok, f.model_cfg(), sdp_cfg, spec);

  CHECK(same_params(nodp.model.params, sdp.model.params));
  CHECK(sdp.ledger.entries.empty());
  CHECK(nodp.ledger.entries.empty());
}

TEST_CASE("sdpsgd with an all-zeros mask reproduces dpsgd exactly") {
  Fixture f = Fixture::make(40, 10, 420);
  TrainConfig cfg;
  cfg.regime = Regime::kDpsgd;
  cfg.lr = 0.3;
  cfg.lr_anneal = false;
  cfg.group_size = 6;
  cfg.max_seq_len = 24;
  cfg.steps = 12;
  cfg.eval_interval = 6;
  cfg.seed = 99;
  PrivacySpec spec{0.6, 0.02, 1e-5, -1, -1};

  TrainResult dp = train(f.train_corpus, f.valid_corpus, Policy::builtin("digits"),
                         f.tok, f.model_cfg(), cfg, spec);

  TrainConfig sdp_cfg = cfg;
  sdp_cfg.regime = Regime::kSdpsgd;
  TrainResult sdp = train(f.train_corpus, f.valid_corpus, Policy::builtin("all"),
                          f.tok, f.model_cfg(), sdp_cfg, spec);

  CHECK(same_params(dp.model.params, sdp.model.params));
  CHECK(dp.ledger == sdp.ledger);
  CHECK(!dp.ledger.entries.empty());
}

TEST_CASE("nodp training reduces perplexity on a tiny corpus") {
  Fixture f = Fixture::make(60, 11, 450);
  TrainConfig cfg;
  cfg.regime = Regime::kNoDp;
  cfg.lr = 1.5;
  cfg.lr_anneal = false;
  cfg.group_size = 12;
  cfg.max_seq_len = 32;
  cfg.steps = 60;
  cfg.eval_interval = 12;
  cfg.seed = 3;
  PrivacySpec unused;
  TrainResult res = train(f.train_corpus, f.valid_corpus,
                          Policy::builtin("digits"), f.tok, f.model_cfg(32), cfg,
                          unused);
  REQUIRE(res.trace.size() >= 2);
  const double first = res.trace.front().ppl;
  const double last = res.trace.back().ppl;
  MESSAGE("valid ppl ", first, " -> ", last);
  CHECK(last < first);
  CHECK(last < static_cast<double>(f.tok.vocab_size()));
  CHECK(!res.trace.back().epsilon.has_value());
}

class NormProbe : public TrainObserver {
 public:
  double clip_bound = 0.0;
  size_t private_updates = 0;
  size_t violations = 0;
  size_t untouched_checked = 0;

  void on_private_update(int64_t, std::span<const double> raw,
                         std::span<const double> clipped) override {
    ++private_updates;
    for (size_t i = 0; i < clipped.size(); ++i) {
      if (clipped[i] > clip_bound + 1e-9) ++violations;
      if (raw[i] < clip_bound && clipped[i] != raw[i]) ++untouched_checked;
    }
  }
};

TEST_CASE("every per-sample gradient respects the clip bound") {
  Fixture f = Fixture::make(40, 13, 420);
  TrainConfig cfg;
  cfg.regime = Regime::kSdpsgd;
  cfg.lr = 0.3;
  cfg.group_size = 6;
  cfg.max_seq_len = 24;
  cfg.steps = 20;
  cfg.eval_interval = 10;
  cfg.seed = 5;
  PrivacySpec spec{0.5, 0.01, 1e-5, -1, -1};
  NormProbe probe;
  probe.clip_bound = spec.clip;
  TrainResult res = train(f.train_corpus, f.valid_corpus,
                          Policy::builtin("customersim"), f.tok, f.model_cfg(),
                          cfg, spec, &probe);
  CHECK(probe.private_updates > 0);
  CHECK(probe.violations == 0);
  CHECK(probe.untouched_checked == 0);

  // Ledger bookkeeping: one gradient-noise entry per private update, and
  // every state-noise entry follows a gradient-noise entry of the same step.
  size_t grad_entries = 0;
  for (size_t i = 0; i < res.ledger.entries.size(); ++i) {
    const auto& e = res.ledger.entries[i];
    if (e.mechanism == LedgerEntry::Mechanism::kGradientNoise) {
      ++grad_entries;
    } else {
      REQUIRE(i > 0);
      CHECK(res.ledger.entries[i - 1].mechanism ==
            LedgerEntry::Mechanism::kGradientNoise);
      CHECK(res.ledger.entries[i - 1].step == e.step);
    }
    CHECK(e.q == doctest::Approx(6.0 / static_cast<double>(
                                           f.train_corpus.records.size())));
  }
  CHECK(grad_entries == probe.private_updates);
}

TEST_CASE("training is deterministic per seed") {
  Fixture f = Fixture::make(30, 15, 400);
  TrainConfig cfg;
  cfg.regime = Regime::kSdpsgd;
  cfg.lr = 0.3;
  cfg.group_size = 5;
  cfg.max_seq_len = 20;
  cfg.steps = 10;
  cfg.eval_interval = 5;
  cfg.seed = 21;
  PrivacySpec spec{0.7, 0.05, 1e-5, -1, -1};
  const Policy policy = Policy::builtin("customersim");
  TrainResult a = train(f.train_corpus, f.valid_corpus, policy, f.tok,
                        f.model_cfg(), cfg, spec);
  TrainResult b = train(f.train_corpus, f.valid_corpus, policy, f.tok,
                        f.model_cfg(), cfg, spec);
  CHECK(same_params(a.model.params, b.model.params));
  CHECK(a.ledger == b.ledger);
  cfg.seed = 22;
  TrainResult c = train(f.train_corpus, f.valid_corpus, policy, f.tok,
                        f.model_cfg(), cfg, spec);
  CHECK(!same_params(a.model.params, c.model.params));
}

TEST_CASE("anon regime trains on the anonymized corpus") {
  Fixture f = Fixture::make(40, 17, 420);
  TrainConfig cfg;
  cfg.regime = Regime::kAnon;
  cfg.lr = 1.0;
  cfg.group_size = 8;
  cfg.max_seq_len = 24;
  cfg.steps = 16;
  cfg.eval_interval = 8;
  cfg.seed = 31;
  PrivacySpec unused;
  const Policy policy = Policy::builtin("digits");
  TrainResult res =
      train(f.train_corpus, f.valid_corpus, policy, f.tok, f.model_cfg(), cfg,
            unused);
  CHECK(res.ledger.entries.empty());

  // Equivalent to nodp on the pre-anonymized corpus.
  const Corpus anon_corpus = anonymize(f.train_corpus, policy, f.tok, "<num>");
  TrainConfig nodp_cfg = cfg;
  nodp_cfg.regime = Regime::kNoDp;
  TrainResult twin = train(anon_corpus, f.valid_corpus, policy, f.tok,
                           f.model_cfg(), nodp_cfg, unused);
  CHECK(same_params(res.model.params, twin.model.params));
}

TEST_CASE("lr anneals on validation plateaus and never rises") {
  Fixture f = Fixture::make(30, 19, 400);
  TrainConfig cfg;
  cfg.regime = Regime::kNoDp;
  cfg.lr = 64.0;  // wildly too high: guaranteed plateau, still finite on tiny data
  cfg.lr_anneal = true;
  cfg.anneal_factor = 4.0;
  cfg.group_size = 4;
  cfg.max_seq_len = 16;
  cfg.steps = 20;
  cfg.eval_interval = 2;
  cfg.seed = 41;
  PrivacySpec unused;
  TrainResult res;
  bool diverged = false;
  try {
    res = train(f.train_corpus, f.valid_corpus, Policy::builtin("digits"), f.tok,
                f.model_cfg(16), cfg, unused);
  } catch (const DivergenceError&) {
    diverged = true;  // acceptable for an absurd lr; the trace check is below
  }
  if (!diverged) {
    double prev = cfg.lr;
    bool annealed = false;
    for (const auto& row : res.trace) {
      CHECK(row.lr <= prev + 1e-12);
      if (row.lr < prev) annealed = true;
      prev = row.lr;
    }
    CHECK(annealed);
    CHECK(res.final_lr < cfg.lr);
  }
}

TEST_CASE("trace rows serialize as jsonl") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "sdplm_trace_test";
  fs::create_directories(dir);
  std::vector<TraceRow> trace;
  TraceRow row;
  row.step = 10;
  row.split = "valid";
  row.ppl = 123.5;
  row.private_ppl = 456.0;
  row.epsilon = 1.25;
  row.lr = 0.05;
  trace.push_back(row);
  row.epsilon.reset();
  trace.push_back(row);
  const std::string path = (dir / "metrics.jsonl").string();
  save_trace(path, trace);
  std::ifstream in(path);
  std::string l1, l2;
  std::getline(in, l1);
  std::getline(in, l2);
  CHECK(l1.find("\"epsilon\":1.25") != std::string::npos);
  CHECK(l2.find("\"epsilon\":null") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("ledger jsonl round-trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "sdplm_ledger_test";
  fs::create_directories(dir);
  PrivacyLedger ledger;
  ledger.append(LedgerEntry::Mechanism::kGradientNoise, 0.01, 0.5, 3);
  ledger.append(LedgerEntry::Mechanism::kStateNoise, 0.01, 0.7, 3);
  const std::string path = (dir / "ledger.jsonl").string();
  ledger.save(path);
  CHECK(PrivacyLedger::load(path) == ledger);
  fs::remove_all(dir);
}
