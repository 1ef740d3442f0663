#include "sdplm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sdplm/errors.hpp"

namespace sdplm {

void Corpus::validate(size_t vocab_size) const {
  for (size_t r = 0; r < records.size(); ++r) {
    for (TokenId id : records[r].ids) {
      if (id < 0 || static_cast<size_t>(id) >= vocab_size) {
        throw ShapeError("corpus: token id out of range in record " +
                         std::to_string(r));
      }
    }
  }
  for (const auto& span : pii_spans) {
    if (span.record_index >= records.size() ||
        span.start_token >= span.end_token ||
        span.end_token > records[span.record_index].size()) {
      throw ShapeError("corpus: pii span indexes an invalid token range");
    }
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("corpus: cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("corpus: cannot write " + path);
  for (const auto& line : lines) f << line << "\n";
}

Corpus tokenize_texts(const std::vector<std::string>& texts, const Tokenizer& tok,
                      std::string split) {
  Corpus c;
  c.split = std::move(split);
  c.records.reserve(texts.size());
  for (const auto& text : texts) {
    TokenSeq seq;
    seq.text = text;
    seq.ids = tok.encode(text, &seq.offsets);
    c.records.push_back(std::move(seq));
  }
  return c;
}

void save_pii_spans(const std::string& path, const std::vector<PiiSpan>& spans) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : spans) {
    j.push_back({{"record_index", s.record_index},
                 {"start_token", s.start_token},
                 {"end_token", s.end_token},
                 {"slot_type", s.slot_type}});
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("spans: cannot write " + path);
  f << j.dump(2) << "\n";
}

std::vector<PiiSpan> load_pii_spans(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("spans: cannot read " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("spans: invalid JSON: ") + e.what());
  }
  std::vector<PiiSpan> spans;
  for (const auto& item : j) {
    PiiSpan s;
    s.record_index = item.at("record_index").get<uint32_t>();
    s.start_token = item.at("start_token").get<uint32_t>();
    s.end_token = item.at("end_token").get<uint32_t>();
    s.slot_type = item.at("slot_type").get<std::string>();
    spans.push_back(std::move(s));
  }
  return spans;
}

size_t CanarySpec::slot_count() const {
  return static_cast<size_t>(
      std::count(template_text.begin(), template_text.end(), slot_marker));
}

double CanarySpec::log2_candidates() const {
  return static_cast<double>(slot_count()) *
         std::log2(static_cast<double>(alphabet.size()));
}

std::string CanarySpec::realize(const std::string& candidate_fill) const {
  std::string out;
  out.reserve(template_text.size());
  size_t next = 0;
  for (char c : template_text) {
    if (c == slot_marker) {
      if (next >= candidate_fill.size()) {
        throw SpecError("canary: fill shorter than the template slots");
      }
      out.push_back(candidate_fill[next++]);
    } else {
      out.push_back(c);
    }
  }
  if (next != candidate_fill.size()) {
    throw SpecError("canary: fill longer than the template slots");
  }
  return out;
}

void CanarySpec::validate() const {
  if (alphabet.empty()) throw SpecError("canary: empty randomness alphabet");
  if (repetitions < 1) throw SpecError("canary: repetitions must be >= 1");
  const size_t k = slot_count();
  if (k == 0) throw SpecError("canary: template has no fill slots");
  if (fill.size() != k) {
    throw SpecError("canary: fill length does not match the template slots");
  }
  for (char c : fill) {
    if (alphabet.find(c) == std::string::npos) {
      throw SpecError("canary: fill character outside the randomness alphabet");
    }
  }
}

Corpus insert_canary(const Corpus& corpus, const CanarySpec& spec,
                     const Tokenizer& tok, uint64_t seed) {
  spec.validate();
  TokenSeq canary;
  canary.text = spec.realize(spec.fill);
  canary.ids = tok.encode(canary.text, &canary.offsets);

  Corpus out = corpus;
  Rng rng(derive_seed(seed, "canary-placement"));
  for (int rep = 0; rep < spec.repetitions; ++rep) {
    const size_t pos = static_cast<size_t>(rng.below(out.records.size() + 1));
    out.records.insert(out.records.begin() + static_cast<ptrdiff_t>(pos), canary);
    for (auto& span : out.pii_spans) {
      if (span.record_index >= pos) span.record_index += 1;
    }
  }
  return out;
}

BatchSampler::BatchSampler(size_t corpus_size, size_t group_size,
                           int max_seq_len, uint64_t seed)
    : n_(corpus_size),
      q_(0.0),
      max_seq_len_(max_seq_len),
      rng_(derive_seed(seed, "batch-sampler")) {
  if (corpus_size == 0) throw DataError("batch: corpus is empty");
  if (group_size == 0 || group_size > corpus_size) {
    throw ConfigError("batch: group size must be in [1, N]");
  }
  if (max_seq_len < 2) {
    throw ConfigError("batch: max sequence length must be at least 2");
  }
  q_ = static_cast<double>(group_size) / static_cast<double>(corpus_size);
}

std::vector<uint32_t> BatchSampler::next() {
  std::vector<uint32_t> batch;
  for (size_t i = 0; i < n_; ++i) {
    if (rng_.bernoulli(q_)) batch.push_back(static_cast<uint32_t>(i));
  }
  return batch;
}

}  // namespace sdplm
