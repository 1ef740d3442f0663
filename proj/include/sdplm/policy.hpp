#pragma once

#include <cstdint>
#include <memory>
#include <regex>
#include <string>
#include <vector>

#include "sdplm/corpus.hpp"
#include "sdplm/tokenizer.hpp"

namespace sdplm {

// Per-token privacy bits: 0 = sensitive, 1 = non-sensitive.
struct PrivacyMask {
  std::vector<uint8_t> bits;

  size_t size() const { return bits.size(); }
  bool all_ones() const;
  size_t zero_count() const;
};

// A policy function maps a tokenized record to its privacy bits.
//
// Built-ins:
//   "digits"      - a token is sensitive iff its decoded text contains a digit
//   "customersim" - regex detectors for the synthetic-dialog slot grammars
//   "none"        - nothing is sensitive
//   "all"         - everything is sensitive
class Policy {
 public:
  struct Pattern {
    std::string slot_type;
    std::string source;
  };

  static Policy builtin(const std::string& name);
  static Policy from_patterns(std::vector<Pattern> patterns);
  // JSON list of {slot_type, pattern}.
  static Policy from_json_file(const std::string& path);

  PrivacyMask mask(const TokenSeq& seq, const Tokenizer& tok) const;
  std::vector<PrivacyMask> mask_corpus(const Corpus& corpus,
                                       const Tokenizer& tok) const;

  const std::string& name() const { return name_; }

  // Fraction of sensitive tokens over the corpus.
  double private_fraction(const Corpus& corpus, const Tokenizer& tok) const;

  // Privacy bit matrix, one row per record, for audit export.
  std::string masks_to_json(const Corpus& corpus, const Tokenizer& tok) const;

 private:
  enum class Kind { kDigits, kRegex, kNone, kAll };
  Policy(Kind kind, std::string name) : kind_(kind), name_(std::move(name)) {}

  Kind kind_ = Kind::kDigits;
  std::string name_;
  std::vector<Pattern> patterns_;
  std::vector<std::regex> compiled_;
};

// Trainability of position j requires both the input token j and its
// prediction target j+1 to be non-sensitive:
//   out[j]   = m[j] & m[j+1]   for j < n-1
//   out[n-1] = m[n-1]
PrivacyMask effective_update_mask(const PrivacyMask& m);

// Time segmentation of a batch window into alternating non-private/private
// runs. Time is global to the records; a column is private iff ANY record
// that is still active there has effective bit 0.
struct SegmentedBatch {
  struct Segment {
    bool is_private = false;
    uint32_t begin = 0;  // inclusive, global time
    uint32_t end = 0;    // exclusive
  };
  std::vector<Segment> segments;
  // carried_state_flags[i]: the recurrent state entering segment i came out
  // of a private segment.
  std::vector<uint8_t> carried_state_flags;
};

// `effective_masks` must already be effective-update masks; mask length is
// the record length. Empty (zero-width) segments are dropped.
SegmentedBatch split_batch(const std::vector<const PrivacyMask*>& effective_masks,
                           uint32_t t_begin, uint32_t t_end,
                           bool state_entering_is_private = false);

// Replaces every sensitive token id with the placeholder id. Idempotent;
// consecutive sensitive tokens are each replaced, never collapsed.
Corpus anonymize(const Corpus& corpus, const Policy& policy,
                 const Tokenizer& tok, const std::string& placeholder_symbol);

}  // namespace sdplm
