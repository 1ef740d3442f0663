#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sdplm/corpus.hpp"
#include "sdplm/model.hpp"
#include "sdplm/tokenizer.hpp"

namespace sdplm {

struct ExposureOptions {
  // Full enumeration up to this candidate-space size; beyond it the rank is
  // estimated from a uniform sample and reported with a 95% interval.
  uint64_t enumeration_cap = 10'000'000;
  uint64_t sample_size = 200'000;
  uint64_t sample_seed = 1;
};

struct ExposureReport {
  CanarySpec canary;
  uint64_t candidates_evaluated = 0;
  uint64_t rank = 1;          // 1-based; ties resolved in the attacker's favor
  double exposure = 0.0;      // log2 |R| - log2 rank
  double log2_space = 0.0;    // log2 |R|
  bool sampled = false;
  double exposure_ci_low = 0.0;   // filled in sampling mode
  double exposure_ci_high = 0.0;
};

// Ranks the true fill among all candidate realizations of the canary
// template by full-sentence sequence NLL. Candidates sharing a token prefix
// share the recurrent state, so enumeration cost is one LSTM step plus one
// softmax per distinct prefix.
ExposureReport exposure(const ModelState& model, const Tokenizer& tok,
                        const CanarySpec& spec, const ExposureOptions& options = {});

struct MembershipReport {
  size_t n_members = 0;
  size_t n_nonmembers = 0;
  bool two_stage = false;
  double accuracy = 0.0;          // final-stage accuracy
  double stage1_accuracy = 0.0;   // equals accuracy for single-stage attacks
  std::vector<double> member_scores;     // per-sample perplexity
  std::vector<double> nonmember_scores;
};

struct MembershipOptions {
  bool two_stage = false;
  size_t subset_size = 300;  // extremes kept for the second stage
};

// Perplexity-ranking membership inference: the lowest-perplexity half of the
// combined pool is labeled "member". Samples are interleaved
// member/nonmember before the stable sort, so a constant-score model scores
// exactly 0.5 on even-sized pools. The two-stage variant first attacks the
// full pool, keeps the best- and worst-predicted extremes, and re-attacks
// that subset.
MembershipReport membership_inference(const ModelState& model, const Tokenizer& tok,
                                      const std::vector<std::string>& members,
                                      const std::vector<std::string>& nonmembers,
                                      const MembershipOptions& options = {});

struct SweepRow {
  std::string checkpoint;
  double valid_ppl = 0.0;
  std::optional<double> exposure;
  std::optional<uint64_t> rank;
  std::optional<double> membership_accuracy;
};

struct SweepConfig {
  std::optional<CanarySpec> canary;
  ExposureOptions exposure_options;
  std::vector<std::string> members;
  std::vector<std::string> nonmembers;
  MembershipOptions membership_options;
};

// Evaluates the configured attacks plus validation perplexity for each
// checkpoint; rows come back sorted by validation perplexity ascending.
std::vector<SweepRow> attack_sweep(const std::vector<std::string>& checkpoint_paths,
                                   const Tokenizer& tok, const Corpus& valid,
                                   const SweepConfig& config);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

}  // namespace sdplm
