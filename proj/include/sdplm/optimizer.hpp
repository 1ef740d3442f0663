#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdplm/corpus.hpp"
#include "sdplm/ledger.hpp"
#include "sdplm/model.hpp"
#include "sdplm/policy.hpp"
#include "sdplm/rng.hpp"

namespace sdplm {

// Gaussian-mechanism parameters for the private updates. State bounds
// default to the gradient bounds when left negative.
struct PrivacySpec {
  double sigma = 0.0;
  double clip = 0.0;
  double delta = 0.0;
  double state_clip = -1.0;
  double state_sigma = -1.0;

  double resolved_state_clip() const { return state_clip > 0 ? state_clip : clip; }
  double resolved_state_sigma() const { return state_sigma > 0 ? state_sigma : sigma; }
  void validate() const;
};

enum class Regime { kNoDp, kDpsgd, kSdpsgd, kAnon };
const char* to_string(Regime r);
Regime regime_from_string(const std::string& s);

struct TrainConfig {
  Regime regime = Regime::kNoDp;
  double lr = 2.0;
  bool lr_anneal = false;      // divide lr by anneal_factor on val-PPL plateau
  double anneal_factor = 4.0;
  int group_size = 16;         // L; sampling rate q = L / N
  int max_seq_len = 64;        // K
  int64_t steps = 100;
  int64_t eval_interval = 50;
  std::string policy_name = "digits";
  std::string placeholder = "<num>";  // anonymization target symbol
  uint64_t seed = 0;

  void validate() const;
};

struct TraceRow {
  int64_t step = 0;
  std::string split;
  double ppl = 0.0;
  double private_ppl = 0.0;
  std::optional<double> epsilon;  // empty for regimes with no privacy budget
  double lr = 0.0;
};

void save_trace(const std::string& path, const std::vector<TraceRow>& trace);

// Test/diagnostic hooks into the update mechanics.
class TrainObserver {
 public:
  virtual ~TrainObserver() = default;
  virtual void on_regular_update(int64_t /*step*/, double /*mean_loss*/) {}
  // Norms are per participating record, before and after clipping.
  virtual void on_private_update(int64_t /*step*/,
                                 std::span<const double> /*raw_norms*/,
                                 std::span<const double> /*clipped_norms*/) {}
  virtual void on_state_noise(int64_t /*step*/, size_t /*lanes*/) {}
};

// grad /= max(1, ||grad||_2 / clip); returns the pre-clip norm. Gradients
// already inside the ball are untouched bit-for-bit.
double clip_to_norm(Parameters& grad, double clip);

// theta <- theta - lr * grad. Non-finite gradients abort training.
void sgd_step(ModelState& model, const Parameters& grad, double lr);

// DP update on one private segment: clips every per-record gradient to
// spec.clip, adds sigma*clip Gaussian noise to the sum, divides by the record
// count, descends, and appends one gradient-noise ledger entry. An empty
// segment is a no-op with no entry.
// Noise is drawn array by array in Parameters::for_each_array order.
void private_step(ModelState& model, std::vector<Parameters>& per_sample,
                  const PrivacySpec& spec, double q, double lr, Rng& noise_rng,
                  PrivacyLedger& ledger, int64_t step,
                  TrainObserver* observer = nullptr);

// Clips each lane's h and c to the state bound, then adds independent
// state_sigma*state_clip Gaussian noise per coordinate (h first, then c, lane
// by lane). Appends one state-noise ledger entry when any lane was touched.
void noise_states(std::vector<LaneState*>& lanes, const PrivacySpec& spec,
                  double q, Rng& noise_rng, PrivacyLedger& ledger, int64_t step,
                  TrainObserver* observer = nullptr);

struct TrainResult {
  ModelState model;
  PrivacyLedger ledger;
  std::vector<TraceRow> trace;
  double final_lr = 0.0;
};

// Runs the configured regime:
//   nodp   - plain SGD, everything treated as non-sensitive
//   dpsgd  - every position sensitive, DP updates only
//   sdpsgd - policy-driven alternation of regular and DP updates
//   anon   - plain SGD on the anonymized corpus (placeholder substitution)
// The privacy spec is ignored for nodp/anon; the policy is ignored for
// nodp/dpsgd. Deterministic given (inputs, cfg.seed).
TrainResult train(const Corpus& train_corpus, const Corpus& valid_corpus,
                  const Policy& policy, const Tokenizer& tok,
                  ModelConfig model_cfg, const TrainConfig& cfg,
                  const PrivacySpec& spec, TrainObserver* observer = nullptr);

}  // namespace sdplm
