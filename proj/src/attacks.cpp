#include "sdplm/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "sdplm/errors.hpp"
#include "sdplm/rng.hpp"

namespace sdplm {
namespace {

// Flat candidate store: token sequences back to back.
struct CandidateSet {
  std::vector<TokenId> flat;
  std::vector<uint32_t> starts;  // size n+1

  size_t size() const { return starts.size() - 1; }
  std::span<const TokenId> seq(size_t i) const {
    return {flat.data() + starts[i], flat.data() + starts[i + 1]};
  }
};

// Counts candidates with NLL strictly below `threshold` by walking the
// sorted sequences as a prefix tree; recurrent state and log-probabilities
// are computed once per distinct prefix.
class PrefixWalker {
 public:
  PrefixWalker(const ModelState& model, const CandidateSet& set,
               double threshold)
      : model_(model), set_(set), threshold_(threshold) {
    order_.resize(set.size());
    std::iota(order_.begin(), order_.end(), 0u);
    std::sort(order_.begin(), order_.end(), [&](uint32_t a, uint32_t b) {
      const auto sa = set_.seq(a);
      const auto sb = set_.seq(b);
      return std::lexicographical_compare(sa.begin(), sa.end(), sb.begin(),
                                          sb.end());
    });
  }

  uint64_t count_strictly_smaller() {
    LaneState root = zero_lane(model_.config);
    walk(0, set_.size(), 0, root, 0.0);
    return smaller_;
  }

 private:
  void walk(size_t lo, size_t hi, size_t depth, const LaneState& state,
            double nll) {
    // Leaves: candidates that end at this depth.
    size_t i = lo;
    while (i < hi && set_.seq(order_[i]).size() == depth) {
      if (nll < threshold_) ++smaller_;
      ++i;
    }
    if (i >= hi) return;

    Vec logprobs;
    if (depth >= 1) next_token_logprobs(model_, state.h, logprobs);
    while (i < hi) {
      const TokenId tokid = set_.seq(order_[i])[depth];
      size_t j = i + 1;
      while (j < hi && set_.seq(order_[j])[depth] == tokid) ++j;
      double child_nll = nll;
      if (depth >= 1) child_nll += -logprobs[static_cast<size_t>(tokid)];
      // The whole subtree is already worse than the threshold: every
      // extension only adds non-negative NLL terms.
      if (child_nll >= threshold_ && depth >= 1) {
        i = j;
        continue;
      }
      LaneState child = state;
      lstm_step(model_, tokid, child.h, child.c);
      walk(i, j, depth + 1, child, child_nll);
      i = j;
    }
  }

  const ModelState& model_;
  const CandidateSet& set_;
  double threshold_;
  std::vector<uint32_t> order_;
  uint64_t smaller_ = 0;
};

std::string fill_for_index(uint64_t index, const std::string& alphabet,
                           size_t slots) {
  std::string fill(slots, alphabet[0]);
  for (size_t s = slots; s-- > 0;) {
    fill[s] = alphabet[index % alphabet.size()];
    index /= alphabet.size();
  }
  return fill;
}

double candidate_space(const CanarySpec& spec) {
  return std::pow(static_cast<double>(spec.alphabet.size()),
                  static_cast<double>(spec.slot_count()));
}

double perplexity_score(const ModelState& model, const Tokenizer& tok,
                        const std::string& text) {
  const std::vector<TokenId> ids = tok.encode(text);
  if (ids.empty()) throw SpecError("membership: empty sample");
  const size_t terms = ids.size() - 1;
  if (terms == 0) return 1.0;
  return std::exp(sequence_nll(model, ids) / static_cast<double>(terms));
}

struct ScoredSample {
  double score = 0.0;
  bool is_member = false;
};

// Lowest-score half labeled member; stable order breaks ties, so the caller
// interleaves members and nonmembers.
double classify_accuracy(std::vector<ScoredSample> pool) {
  const size_t n = pool.size();
  const size_t half = n / 2;
  std::stable_sort(pool.begin(), pool.end(),
                   [](const ScoredSample& a, const ScoredSample& b) {
                     return a.score < b.score;
                   });
  size_t correct = 0;
  for (size_t i = 0; i < n; ++i) {
    const bool predicted_member = i < half;
    if (predicted_member == pool[i].is_member) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace

ExposureReport exposure(const ModelState& model, const Tokenizer& tok,
                        const CanarySpec& spec, const ExposureOptions& options) {
  spec.validate();
  ExposureReport report;
  report.canary = spec;
  report.log2_space = spec.log2_candidates();

  const double true_nll =
      sequence_nll(model, tok.encode(spec.realize(spec.fill)));
  const double space = candidate_space(spec);
  const size_t slots = spec.slot_count();

  if (space <= static_cast<double>(options.enumeration_cap)) {
    const uint64_t total = static_cast<uint64_t>(space);
    CandidateSet set;
    set.starts.reserve(total + 1);
    set.starts.push_back(0);
    for (uint64_t idx = 0; idx < total; ++idx) {
      const std::string text =
          spec.realize(fill_for_index(idx, spec.alphabet, slots));
      const std::vector<TokenId> ids = tok.encode(text);
      set.flat.insert(set.flat.end(), ids.begin(), ids.end());
      set.starts.push_back(static_cast<uint32_t>(set.flat.size()));
    }
    PrefixWalker walker(model, set, true_nll);
    const uint64_t smaller = walker.count_strictly_smaller();
    report.candidates_evaluated = total;
    report.rank = smaller + 1;
    report.exposure = report.log2_space - std::log2(static_cast<double>(report.rank));
    report.exposure_ci_low = report.exposure;
    report.exposure_ci_high = report.exposure;
    return report;
  }

  // Sampling mode: estimate the fraction of candidates beating the true fill.
  report.sampled = true;
  Rng rng(derive_seed(options.sample_seed, "exposure-sample"));
  const uint64_t m = options.sample_size;
  CandidateSet set;
  set.starts.reserve(m + 1);
  set.starts.push_back(0);
  for (uint64_t s = 0; s < m; ++s) {
    std::string fill(slots, '0');
    for (size_t k = 0; k < slots; ++k) {
      fill[k] = spec.alphabet[rng.below(spec.alphabet.size())];
    }
    const std::vector<TokenId> ids = tok.encode(spec.realize(fill));
    set.flat.insert(set.flat.end(), ids.begin(), ids.end());
    set.starts.push_back(static_cast<uint32_t>(set.flat.size()));
  }
  PrefixWalker walker(model, set, true_nll);
  const double frac = static_cast<double>(walker.count_strictly_smaller()) /
                      static_cast<double>(m);
  const double se = std::sqrt(std::max(frac * (1.0 - frac), 1.0 / static_cast<double>(m)) /
                              static_cast<double>(m));
  auto rank_at = [&](double f) {
    const double r = 1.0 + std::clamp(f, 0.0, 1.0) * (space - 1.0);
    return std::max(1.0, r);
  };
  report.candidates_evaluated = m;
  report.rank = static_cast<uint64_t>(rank_at(frac));
  report.exposure = report.log2_space - std::log2(rank_at(frac));
  report.exposure_ci_low = report.log2_space - std::log2(rank_at(frac + 1.96 * se));
  report.exposure_ci_high = report.log2_space - std::log2(rank_at(frac - 1.96 * se));
  return report;
}

MembershipReport membership_inference(const ModelState& model, const Tokenizer& tok,
                                      const std::vector<std::string>& members,
                                      const std::vector<std::string>& nonmembers,
                                      const MembershipOptions& options) {
  if (members.size() != nonmembers.size()) {
    throw SpecError("membership: member and nonmember sets must match in size");
  }
  if (members.empty()) throw SpecError("membership: empty sample sets");
  {
    std::unordered_set<std::string> seen(members.begin(), members.end());
    for (const auto& s : nonmembers) {
      if (seen.count(s)) {
        throw SpecError("membership: sets overlap on '" + s + "'");
      }
    }
  }

  MembershipReport report;
  report.n_members = members.size();
  report.n_nonmembers = nonmembers.size();
  report.two_stage = options.two_stage;
  report.member_scores.reserve(members.size());
  report.nonmember_scores.reserve(nonmembers.size());
  for (const auto& s : members) {
    report.member_scores.push_back(perplexity_score(model, tok, s));
  }
  for (const auto& s : nonmembers) {
    report.nonmember_scores.push_back(perplexity_score(model, tok, s));
  }

  std::vector<ScoredSample> pool;
  pool.reserve(members.size() * 2);
  for (size_t i = 0; i < members.size(); ++i) {
    pool.push_back({report.member_scores[i], true});
    pool.push_back({report.nonmember_scores[i], false});
  }
  report.stage1_accuracy = classify_accuracy(pool);

  if (!options.two_stage) {
    report.accuracy = report.stage1_accuracy;
    return report;
  }

  // Keep the best- and worst-predicted extremes, then re-attack the subset.
  const size_t subset = std::min(options.subset_size, pool.size());
  const size_t head = subset / 2;
  const size_t tail = subset - head;
  std::vector<ScoredSample> sorted = pool;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredSample& a, const ScoredSample& b) {
                     return a.score < b.score;
                   });
  std::vector<ScoredSample> extremes;
  extremes.reserve(subset);
  for (size_t i = 0; i < head; ++i) extremes.push_back(sorted[i]);
  for (size_t i = pool.size() - tail; i < pool.size(); ++i) {
    extremes.push_back(sorted[i]);
  }
  report.accuracy = classify_accuracy(std::move(extremes));
  return report;
}

std::vector<SweepRow> attack_sweep(const std::vector<std::string>& checkpoint_paths,
                                   const Tokenizer& tok, const Corpus& valid,
                                   const SweepConfig& config) {
  std::vector<SweepRow> rows;
  for (const auto& path : checkpoint_paths) {
    ModelState model = load_checkpoint(path);
    SweepRow row;
    row.checkpoint = path;
    row.valid_ppl = evaluate(model, valid).ppl;
    if (config.canary) {
      ExposureReport rep =
          exposure(model, tok, *config.canary, config.exposure_options);
      row.exposure = rep.exposure;
      row.rank = rep.rank;
    }
    if (!config.members.empty()) {
      MembershipReport rep = membership_inference(
          model, tok, config.members, config.nonmembers, config.membership_options);
      row.membership_accuracy = rep.accuracy;
    }
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return a.valid_ppl < b.valid_ppl;
  });
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "checkpoint,valid_ppl,exposure,rank,membership_accuracy\n";
  for (const auto& row : rows) {
    out << row.checkpoint << "," << row.valid_ppl << ",";
    if (row.exposure) out << *row.exposure;
    out << ",";
    if (row.rank) out << *row.rank;
    out << ",";
    if (row.membership_accuracy) out << *row.membership_accuracy;
    out << "\n";
  }
  return out.str();
}

}  // namespace sdplm
