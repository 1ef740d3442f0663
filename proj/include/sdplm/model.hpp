#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sdplm/corpus.hpp"
#include "sdplm/policy.hpp"
#include "sdplm/tokenizer.hpp"

namespace sdplm {

// Dense row-major matrix of doubles. Training runs in 64-bit throughout.
struct Mat {
  size_t rows = 0, cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(size_t r, size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
  double* row(size_t r) { return a.data() + r * cols; }
  const double* row(size_t r) const { return a.data() + r * cols; }
  double& at(size_t r, size_t c) { return a[r * cols + c]; }
  double at(size_t r, size_t c) const { return a[r * cols + c]; }
  size_t size() const { return a.size(); }
};

using Vec = std::vector<double>;

struct ModelConfig {
  int vocab_size = 0;
  int embedding_dim = 0;
  int hidden_dim = 0;
  bool tie_embeddings = false;  // requires embedding_dim == hidden_dim
  double init_scale = 0.1;
  // Forget-gate biases are set to this constant at init. A degenerate
  // init_scale of exactly 0 produces identically-zero parameters instead
  // (the uniform-predictor model used widely in tests).
  double forget_bias = 1.0;
  uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  bool operator==(const ModelConfig&) const = default;
};

// Named parameter tensors. LSTM gate order along the 4H axis is
// input, forget, cell-candidate, output. With tied embeddings the output
// projection reuses the embedding matrix and out_w is empty.
struct Parameters {
  Mat embedding;  // V x E
  Mat lstm_wx;    // 4H x E
  Mat lstm_wh;    // 4H x H
  Vec lstm_b;     // 4H
  Mat out_w;      // V x H (absent when tied)
  Vec out_b;      // V
  bool tied = false;

  static Parameters shaped(const ModelConfig& cfg);

  void for_each_array(
      const std::function<void(const char*, std::span<double>)>& fn);
  void for_each_array(
      const std::function<void(const char*, std::span<const double>)>& fn) const;

  size_t total_size() const;
  double l2_norm() const;  // single global norm across all tensors
  void fill_zero();
  void add_scaled(const Parameters& other, double s);  // this += s * other
  void scale(double s);
  bool all_finite() const;
};

size_t parameter_count(const ModelConfig& cfg);

struct ModelState {
  ModelConfig config;
  Parameters params;
};

// Per-record recurrent state.
struct LaneState {
  Vec h, c;
};
LaneState zero_lane(const ModelConfig& cfg);

ModelState init_model(const ModelConfig& cfg);

// Activations retained by forward for the backward pass. Single use.
struct Tape {
  std::vector<TokenId> tokens, targets;
  Vec h0, c0;
  Mat gate_i, gate_f, gate_g, gate_o;  // T x H
  Mat cell, tanh_cell, hidden;         // T x H
  Mat probs;  // T x V; row t is softmax(logits_t), computed where a target exists
  std::vector<double> nll;  // -log p(target_t | ...), 0 where no target
  bool consumed = false;
};

struct ForwardOut {
  std::vector<double> nll;  // aligned with positions
  double nll_sum = 0.0;
  size_t loss_terms = 0;
  LaneState state;  // after the last position
  Tape tape;
};

// Runs the LSTM over `tokens` starting from `carried`. targets[t] is the
// token position t should predict; -1 marks positions without a loss term
// (e.g. the last token of a record). Gradients never flow into `carried`:
// truncation happens at every segment boundary.
ForwardOut forward(const ModelState& state, std::span<const TokenId> tokens,
                   std::span<const TokenId> targets, const LaneState& carried);

// Convenience: predict the next token within the slice; the final position
// has no target.
ForwardOut forward(const ModelState& state, std::span<const TokenId> tokens,
                   const LaneState& carried);

// Gradient of loss_scale * sum(nll) with respect to the parameters.
// Consumes the tape; reuse throws UsageError.
Parameters backward(const ModelState& state, Tape& tape, double loss_scale = 1.0);

// One recurrent step and the output distribution, for incremental scoring.
void lstm_step(const ModelState& state, TokenId x, Vec& h, Vec& c);
void next_token_logprobs(const ModelState& state, const Vec& h, Vec& out);

struct PplReport {
  double ppl = 0.0;
  double private_ppl = 0.0;  // over loss terms whose target token is sensitive
  size_t loss_terms = 0;
  size_t private_terms = 0;
};

// exp(total NLL / predicted tokens), fresh zero state per record. Private
// perplexity is filled when raw policy masks are supplied (0 = sensitive);
// it is 0 when no sensitive targets exist.
PplReport evaluate(const ModelState& state, const Corpus& corpus,
                   const std::vector<PrivacyMask>* masks = nullptr);

// Sum of per-transition NLL from a fresh zero state (|ids| - 1 terms).
double sequence_nll(const ModelState& state, std::span<const TokenId> ids);

// Checkpoint container: header (format version, config JSON) + named
// little-endian float64 arrays with explicit shapes.
void save_checkpoint(const ModelState& state, const std::string& path);
ModelState load_checkpoint(const std::string& path);

}  // namespace sdplm
