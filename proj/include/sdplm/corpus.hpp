#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sdplm/rng.hpp"
#include "sdplm/tokenizer.hpp"

namespace sdplm {

// One tokenized training record. `text` and `offsets` are retained when the
// record came from text (offsets[i] is the byte span of token i in `text`);
// both may be empty for records built directly from ids.
struct TokenSeq {
  std::vector<TokenId> ids;
  std::string text;
  std::vector<std::pair<uint32_t, uint32_t>> offsets;

  size_t size() const { return ids.size(); }
};

// Gold annotation of one sensitive span, in token coordinates.
struct PiiSpan {
  uint32_t record_index = 0;
  uint32_t start_token = 0;  // inclusive
  uint32_t end_token = 0;    // exclusive
  std::string slot_type;
};

enum class Provenance { kText, kSyntheticDialog };

struct Corpus {
  std::vector<TokenSeq> records;
  std::string split;  // "train" | "valid" | "test"
  Provenance provenance = Provenance::kText;
  std::vector<PiiSpan> pii_spans;

  size_t size() const { return records.size(); }
  // Throws ShapeError if any token id or span is out of range.
  void validate(size_t vocab_size) const;
};

// One record per line. Lines are taken verbatim; the trailing newline is the
// record separator and not part of the record.
std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

Corpus tokenize_texts(const std::vector<std::string>& texts, const Tokenizer& tok,
                      std::string split = "train");

// Gold-span sidecar (JSON list of {record_index, start_token, end_token,
// slot_type}).
void save_pii_spans(const std::string& path, const std::vector<PiiSpan>& spans);
std::vector<PiiSpan> load_pii_spans(const std::string& path);

// A fixed-format secret planted into training data to audit memorization.
// `template_text` contains exactly K copies of `slot_marker`; each is filled
// from `alphabet`, giving |R| = |alphabet|^K candidate realizations.
struct CanarySpec {
  std::string template_text;
  std::string alphabet;
  std::string fill;
  int repetitions = 1;
  char slot_marker = '#';

  size_t slot_count() const;
  double log2_candidates() const;  // log2 |R|
  std::string realize(const std::string& candidate_fill) const;
  // Throws SpecError if fill length or characters don't match the slots.
  void validate() const;
};

// Inserts `spec.repetitions` encoded copies of the realized canary at
// seeded-uniform record positions. The input corpus is left untouched;
// pre-existing pii_span indices are remapped to the shifted records.
Corpus insert_canary(const Corpus& corpus, const CanarySpec& spec,
                     const Tokenizer& tok, uint64_t seed);

// Poisson batch sampling: each step includes every record independently with
// probability q = group_size / N. Single consumer; deterministic per seed.
class BatchSampler {
 public:
  BatchSampler(size_t corpus_size, size_t group_size, int max_seq_len,
               uint64_t seed);

  // Record indices for the next step; may be empty.
  std::vector<uint32_t> next();

  double sampling_rate() const { return q_; }
  int max_seq_len() const { return max_seq_len_; }

 private:
  size_t n_;
  double q_;
  int max_seq_len_;
  Rng rng_;
};

}  // namespace sdplm
