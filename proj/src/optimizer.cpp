#include "sdplm/optimizer.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "sdplm/accountant.hpp"
#include "sdplm/errors.hpp"

namespace sdplm {

void PrivacySpec::validate() const {
  if (sigma <= 0.0) throw ConfigError("privacy: sigma must be positive");
  if (clip <= 0.0) throw ConfigError("privacy: clip bound must be positive");
  if (delta <= 0.0 || delta >= 1.0) {
    throw ConfigError("privacy: delta must be in (0, 1)");
  }
}

const char* to_string(Regime r) {
  switch (r) {
    case Regime::kNoDp: return "nodp";
    case Regime::kDpsgd: return "dpsgd";
    case Regime::kSdpsgd: return "sdpsgd";
    case Regime::kAnon: return "anon";
  }
  return "unknown";
}

Regime regime_from_string(const std::string& s) {
  if (s == "nodp") return Regime::kNoDp;
  if (s == "dpsgd") return Regime::kDpsgd;
  if (s == "sdpsgd") return Regime::kSdpsgd;
  if (s == "anon") return Regime::kAnon;
  throw ConfigError("train: unknown regime '" + s + "'");
}

void TrainConfig::validate() const {
  if (lr <= 0.0) throw ConfigError("train: learning rate must be positive");
  if (anneal_factor <= 1.0) throw ConfigError("train: anneal factor must exceed 1");
  if (group_size < 1) throw ConfigError("train: group size must be at least 1");
  if (max_seq_len < 2) throw ConfigError("train: max_seq_len must be at least 2");
  if (steps < 1) throw ConfigError("train: step count must be positive");
  if (eval_interval < 1) throw ConfigError("train: eval interval must be positive");
}

void save_trace(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("trace: cannot write " + path);
  for (const auto& row : trace) {
    nlohmann::json j;
    j["step"] = row.step;
    j["split"] = row.split;
    j["ppl"] = row.ppl;
    j["private_ppl"] = row.private_ppl;
    if (row.epsilon) {
      j["epsilon"] = *row.epsilon;
    } else {
      j["epsilon"] = nullptr;
    }
    j["lr"] = row.lr;
    f << j.dump() << "\n";
  }
}

double clip_to_norm(Parameters& grad, double clip) {
  const double norm = grad.l2_norm();
  if (norm > clip) grad.scale(clip / norm);
  return norm;
}

void sgd_step(ModelState& model, const Parameters& grad, double lr) {
  if (!grad.all_finite()) {
    throw DivergenceError("train: non-finite gradient in regular update");
  }
  model.params.add_scaled(grad, -lr);
  if (!model.params.all_finite()) {
    throw DivergenceError("train: parameters became non-finite");
  }
}

void private_step(ModelState& model, std::vector<Parameters>& per_sample,
                  const PrivacySpec& spec, double q, double lr, Rng& noise_rng,
                  PrivacyLedger& ledger, int64_t step, TrainObserver* observer) {
  if (per_sample.empty()) return;  // no mechanism invocation, no entry
  std::vector<double> raw_norms, clipped_norms;
  raw_norms.reserve(per_sample.size());
  clipped_norms.reserve(per_sample.size());

  Parameters noised = Parameters::shaped(model.config);
  for (auto& g : per_sample) {
    if (!g.all_finite()) {
      throw DivergenceError("train: non-finite per-sample gradient");
    }
    raw_norms.push_back(clip_to_norm(g, spec.clip));
    clipped_norms.push_back(g.l2_norm());
    noised.add_scaled(g, 1.0);
  }
  // Noise the sum, then average over the private tuple size.
  noised.for_each_array([&](const char*, std::span<double> a) {
    std::vector<double> xi(a.size());
    noise_rng.gaussian_fill(xi);
    for (size_t i = 0; i < a.size(); ++i) a[i] += spec.sigma * spec.clip * xi[i];
  });
  noised.scale(1.0 / static_cast<double>(per_sample.size()));
  model.params.add_scaled(noised, -lr);
  if (!model.params.all_finite()) {
    throw DivergenceError("train: parameters became non-finite");
  }
  ledger.append(LedgerEntry::Mechanism::kGradientNoise, q, spec.sigma, step);
  if (observer) observer->on_private_update(step, raw_norms, clipped_norms);
}

void noise_states(std::vector<LaneState*>& lanes, const PrivacySpec& spec,
                  double q, Rng& noise_rng, PrivacyLedger& ledger, int64_t step,
                  TrainObserver* observer) {
  if (lanes.empty()) return;
  const double bound = spec.resolved_state_clip();
  const double sigma = spec.resolved_state_sigma();
  auto clip_and_noise = [&](Vec& v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    const double norm = std::sqrt(sq);
    if (norm > bound) {
      const double s = bound / norm;
      for (double& x : v) x *= s;
    }
    std::vector<double> xi(v.size());
    noise_rng.gaussian_fill(xi);
    for (size_t i = 0; i < v.size(); ++i) v[i] += sigma * bound * xi[i];
  };
  for (LaneState* lane : lanes) {
    clip_and_noise(lane->h);
    clip_and_noise(lane->c);
  }
  ledger.append(LedgerEntry::Mechanism::kStateNoise, q, sigma, step);
  if (observer) observer->on_state_noise(step, lanes.size());
}

namespace {

struct EvalContext {
  const Corpus* valid;
  const std::vector<PrivacyMask>* valid_masks;
  bool has_budget;
  double delta;
};

TraceRow run_eval(const ModelState& model, const EvalContext& ctx,
                  const PrivacyLedger& ledger, int64_t step, double lr) {
  PplReport rep = evaluate(model, *ctx.valid, ctx.valid_masks);
  TraceRow row;
  row.step = step;
  row.split = "valid";
  row.ppl = rep.ppl;
  row.private_ppl = rep.private_ppl;
  row.lr = lr;
  if (ctx.has_budget) {
    row.epsilon = to_eps_delta(compose(ledger), ctx.delta).epsilon;
  }
  return row;
}

}  // namespace

TrainResult train(const Corpus& train_corpus, const Corpus& valid_corpus,
                  const Policy& policy, const Tokenizer& tok,
                  ModelConfig model_cfg, const TrainConfig& cfg,
                  const PrivacySpec& spec, TrainObserver* observer) {
  cfg.validate();
  model_cfg.validate();
  const bool is_dp = cfg.regime == Regime::kDpsgd || cfg.regime == Regime::kSdpsgd;
  if (is_dp) spec.validate();
  if (train_corpus.records.empty()) throw DataError("train: empty training corpus");
  if (static_cast<size_t>(cfg.group_size) > train_corpus.records.size()) {
    throw ConfigError("train: group size exceeds the corpus size");
  }

  const Corpus* corpus = &train_corpus;
  Corpus anonymized;
  if (cfg.regime == Regime::kAnon) {
    anonymized = anonymize(train_corpus, policy, tok, cfg.placeholder);
    corpus = &anonymized;
  }
  corpus->validate(tok.vocab_size());

  // Raw masks drive evaluation splits; effective masks drive segmentation.
  std::vector<PrivacyMask> raw_masks(corpus->records.size());
  std::vector<PrivacyMask> effective(corpus->records.size());
  for (size_t r = 0; r < corpus->records.size(); ++r) {
    const size_t n = corpus->records[r].size();
    switch (cfg.regime) {
      case Regime::kNoDp:
      case Regime::kAnon:
        raw_masks[r].bits.assign(n, 1);
        break;
      case Regime::kDpsgd:
        raw_masks[r].bits.assign(n, 0);
        break;
      case Regime::kSdpsgd:
        raw_masks[r] = policy.mask(corpus->records[r], tok);
        break;
    }
    if (n > 0) effective[r] = effective_update_mask(raw_masks[r]);
  }
  std::vector<PrivacyMask> valid_masks;
  const std::vector<PrivacyMask>* valid_masks_ptr = nullptr;
  if (cfg.regime == Regime::kSdpsgd || cfg.regime == Regime::kAnon) {
    valid_masks = policy.mask_corpus(valid_corpus, tok);
    valid_masks_ptr = &valid_masks;
  }

  model_cfg.seed = cfg.seed;
  ModelState model = init_model(model_cfg);
  BatchSampler sampler(corpus->records.size(), static_cast<size_t>(cfg.group_size),
                       cfg.max_seq_len, cfg.seed);
  Rng noise_rng(derive_seed(cfg.seed, "noise"));

  TrainResult result;
  EvalContext eval_ctx{&valid_corpus, valid_masks_ptr, is_dp, spec.delta};
  const double divergence_ppl = 10.0 * static_cast<double>(model_cfg.vocab_size);
  double lr = cfg.lr;
  double best_valid_ppl = std::numeric_limits<double>::infinity();
  const double q = sampler.sampling_rate();
  const uint32_t window = static_cast<uint32_t>(cfg.max_seq_len);

  for (int64_t step = 1; step <= cfg.steps; ++step) {
    const std::vector<uint32_t> batch = sampler.next();
    if (!batch.empty()) {
      std::vector<LaneState> lanes(batch.size(), zero_lane(model_cfg));
      uint32_t max_len = 0;
      for (uint32_t r : batch) {
        max_len = std::max(max_len,
                           static_cast<uint32_t>(corpus->records[r].size()));
      }
      for (uint32_t w_begin = 0; w_begin < max_len; w_begin += window) {
        const uint32_t w_end = std::min(w_begin + window, max_len);
        std::vector<const PrivacyMask*> window_masks;
        window_masks.reserve(batch.size());
        for (uint32_t r : batch) window_masks.push_back(&effective[r]);
        const SegmentedBatch segmented =
            split_batch(window_masks, w_begin, w_end);

        for (const auto& seg : segmented.segments) {
          // Records with at least one position inside the segment.
          std::vector<size_t> participating;
          for (size_t b = 0; b < batch.size(); ++b) {
            if (corpus->records[batch[b]].size() > seg.begin) {
              participating.push_back(b);
            }
          }
          if (participating.empty()) continue;

          std::vector<Tape> tapes;
          tapes.reserve(participating.size());
          size_t total_terms = 0;
          for (size_t b : participating) {
            const auto& ids = corpus->records[batch[b]].ids;
            const uint32_t end =
                std::min(seg.end, static_cast<uint32_t>(ids.size()));
            std::vector<TokenId> tokens(ids.begin() + seg.begin, ids.begin() + end);
            std::vector<TokenId> targets(tokens.size(), -1);
            for (uint32_t j = seg.begin; j < end; ++j) {
              if (j + 1 < ids.size()) {
                targets[j - seg.begin] = ids[j + 1];
                // Loss ownership follows the effective bit of the input
                // position; a non-private segment must never own a
                // sensitive loss term.
                assert(seg.is_private ||
                       effective[batch[b]].bits[j] == 1);
              }
            }
            ForwardOut out = forward(model, tokens, targets, lanes[b]);
            lanes[b] = out.state;
            total_terms += out.loss_terms;
            tapes.push_back(std::move(out.tape));
          }

          if (!seg.is_private) {
            if (total_terms > 0) {
              Parameters grad = Parameters::shaped(model_cfg);
              const double scale = 1.0 / static_cast<double>(total_terms);
              double mean_loss = 0.0;
              for (auto& tape : tapes) {
                for (double v : tape.nll) mean_loss += v * scale;
                grad.add_scaled(backward(model, tape, scale), 1.0);
              }
              sgd_step(model, grad, lr);
              if (observer) observer->on_regular_update(step, mean_loss);
            }
          } else {
            std::vector<Parameters> per_sample;
            per_sample.reserve(tapes.size());
            for (auto& tape : tapes) {
              per_sample.push_back(backward(model, tape, 1.0));
            }
            private_step(model, per_sample, spec, q, lr, noise_rng, result.ledger,
                         step, observer);
            // State leaving a private segment is noised only when some lane
            // still flows onward; end-of-record state is discarded.
            std::vector<LaneState*> continuing;
            for (size_t b : participating) {
              if (corpus->records[batch[b]].size() > seg.end) {
                continuing.push_back(&lanes[b]);
              }
            }
            if (!continuing.empty()) {
              noise_states(continuing, spec, q, noise_rng, result.ledger, step,
                           observer);
            }
          }
        }
      }
    }

    if (step % cfg.eval_interval == 0 || step == cfg.steps) {
      TraceRow row = run_eval(model, eval_ctx, result.ledger, step, lr);
      result.trace.push_back(row);
      if (!std::isfinite(row.ppl) || row.ppl > divergence_ppl) {
        std::ostringstream msg;
        msg << "train: diverged at step " << step << " (valid ppl " << row.ppl
            << " > " << divergence_ppl << ")";
        throw DivergenceError(msg.str());
      }
      if (cfg.lr_anneal) {
        if (row.ppl < best_valid_ppl) {
          best_valid_ppl = row.ppl;
        } else {
          lr /= cfg.anneal_factor;
        }
      } else {
        best_valid_ppl = std::min(best_valid_ppl, row.ppl);
      }
    }
  }

  result.model = std::move(model);
  result.final_lr = lr;
  return result;
}

}  // namespace sdplm
