#include "sdplm/policy.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "sdplm/errors.hpp"
#include "sdplm/synth.hpp"

namespace sdplm {

bool PrivacyMask::all_ones() const {
  return std::all_of(bits.begin(), bits.end(), [](uint8_t b) { return b == 1; });
}

size_t PrivacyMask::zero_count() const {
  return static_cast<size_t>(
      std::count(bits.begin(), bits.end(), static_cast<uint8_t>(0)));
}

Policy Policy::builtin(const std::string& name) {
  if (name == "digits") return Policy(Kind::kDigits, name);
  if (name == "none") return Policy(Kind::kNone, name);
  if (name == "all") return Policy(Kind::kAll, name);
  if (name == "customersim") {
    Policy p = from_patterns({
        {"name", grammars::name_pattern()},
        {"address", grammars::address_pattern()},
        {"phone", grammars::phone_pattern()},
        {"order_id", grammars::order_id_pattern()},
        {"tracking", grammars::tracking_pattern()},
    });
    p.name_ = name;
    return p;
  }
  throw ConfigError("policy: unknown built-in policy '" + name + "'");
}

Policy Policy::from_patterns(std::vector<Pattern> patterns) {
  Policy p(Kind::kRegex, "custom");
  p.patterns_ = std::move(patterns);
  for (const auto& pat : p.patterns_) {
    try {
      p.compiled_.emplace_back(pat.source, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
      throw ConfigError("policy: invalid pattern for slot '" + pat.slot_type +
                        "': " + e.what());
    }
  }
  return p;
}

Policy Policy::from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("policy: cannot read " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("policy: invalid JSON: ") + e.what());
  }
  std::vector<Pattern> patterns;
  for (const auto& item : j) {
    patterns.push_back(Pattern{item.at("slot_type").get<std::string>(),
                               item.at("pattern").get<std::string>()});
  }
  Policy p = from_patterns(std::move(patterns));
  p.name_ = path;
  return p;
}

PrivacyMask Policy::mask(const TokenSeq& seq, const Tokenizer& tok) const {
  PrivacyMask m;
  m.bits.assign(seq.ids.size(), 1);
  switch (kind_) {
    case Kind::kNone:
      break;
    case Kind::kAll:
      std::fill(m.bits.begin(), m.bits.end(), 0);
      break;
    case Kind::kDigits:
      for (size_t i = 0; i < seq.ids.size(); ++i) {
        const std::string& sym = tok.symbol(seq.ids[i]);
        if (std::any_of(sym.begin(), sym.end(),
                        [](unsigned char c) { return c >= '0' && c <= '9'; })) {
          m.bits[i] = 0;
        }
      }
      break;
    case Kind::kRegex: {
      // Decoding token-by-token gives both the text and the token offsets,
      // so stored spans are not required.
      std::string text;
      std::vector<std::pair<size_t, size_t>> offsets;
      offsets.reserve(seq.ids.size());
      for (TokenId id : seq.ids) {
        const std::string& sym = tok.symbol(id);
        offsets.emplace_back(text.size(), text.size() + sym.size());
        text += sym;
      }
      std::vector<std::pair<size_t, size_t>> matches;
      for (const auto& re : compiled_) {
        for (auto it = std::sregex_iterator(text.begin(), text.end(), re);
             it != std::sregex_iterator(); ++it) {
          matches.emplace_back(static_cast<size_t>(it->position()),
                               static_cast<size_t>(it->position()) +
                                   static_cast<size_t>(it->length()));
        }
      }
      // Any overlap marks the whole token sensitive.
      for (size_t i = 0; i < offsets.size(); ++i) {
        for (const auto& [mb, me] : matches) {
          if (offsets[i].first < me && mb < offsets[i].second) {
            m.bits[i] = 0;
            break;
          }
        }
      }
      break;
    }
  }
  return m;
}

std::vector<PrivacyMask> Policy::mask_corpus(const Corpus& corpus,
                                             const Tokenizer& tok) const {
  std::vector<PrivacyMask> masks;
  masks.reserve(corpus.records.size());
  for (const auto& rec : corpus.records) masks.push_back(mask(rec, tok));
  return masks;
}

double Policy::private_fraction(const Corpus& corpus, const Tokenizer& tok) const {
  size_t total = 0, priv = 0;
  for (const auto& rec : corpus.records) {
    PrivacyMask m = mask(rec, tok);
    total += m.size();
    priv += m.zero_count();
  }
  return total == 0 ? 0.0 : static_cast<double>(priv) / static_cast<double>(total);
}

std::string Policy::masks_to_json(const Corpus& corpus, const Tokenizer& tok) const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& rec : corpus.records) {
    PrivacyMask m = mask(rec, tok);
    rows.push_back(std::vector<int>(m.bits.begin(), m.bits.end()));
  }
  nlohmann::json j;
  j["policy"] = name_;
  j["bits"] = rows;
  return j.dump();
}

PrivacyMask effective_update_mask(const PrivacyMask& m) {
  if (m.bits.empty()) throw ShapeError("policy: empty mask");
  PrivacyMask out;
  const size_t n = m.bits.size();
  out.bits.resize(n);
  for (size_t j = 0; j + 1 < n; ++j) {
    out.bits[j] = static_cast<uint8_t>(m.bits[j] & m.bits[j + 1]);
  }
  out.bits[n - 1] = m.bits[n - 1];
  return out;
}

SegmentedBatch split_batch(const std::vector<const PrivacyMask*>& effective_masks,
                           uint32_t t_begin, uint32_t t_end,
                           bool state_entering_is_private) {
  if (effective_masks.empty()) throw ShapeError("split: no masks");
  uint32_t max_len = 0;
  for (const auto* m : effective_masks) {
    max_len = std::max(max_len, static_cast<uint32_t>(m->size()));
  }
  t_end = std::min(t_end, max_len);
  SegmentedBatch out;
  if (t_begin >= t_end) return out;

  // Conservative column rule: private iff any active record is private there.
  std::vector<uint8_t> col_private(t_end - t_begin, 0);
  for (uint32_t t = t_begin; t < t_end; ++t) {
    for (const auto* m : effective_masks) {
      if (t < m->size() && m->bits[t] == 0) {
        col_private[t - t_begin] = 1;
        break;
      }
    }
  }

  uint32_t run_start = t_begin;
  bool prev_private = state_entering_is_private;
  for (uint32_t t = t_begin + 1; t <= t_end; ++t) {
    if (t == t_end || col_private[t - t_begin] != col_private[run_start - t_begin]) {
      SegmentedBatch::Segment seg;
      seg.is_private = col_private[run_start - t_begin] != 0;
      seg.begin = run_start;
      seg.end = t;
      out.segments.push_back(seg);
      out.carried_state_flags.push_back(prev_private ? 1 : 0);
      prev_private = seg.is_private;
      run_start = t;
    }
  }
  return out;
}

Corpus anonymize(const Corpus& corpus, const Policy& policy,
                 const Tokenizer& tok, const std::string& placeholder_symbol) {
  if (!tok.has_symbol(placeholder_symbol)) {
    throw ConfigError("anonymize: placeholder '" + placeholder_symbol +
                      "' is not in the vocabulary");
  }
  const TokenId placeholder = tok.reserved_id(placeholder_symbol);
  Corpus out = corpus;
  for (auto& rec : out.records) {
    PrivacyMask m = policy.mask(rec, tok);
    bool touched = false;
    for (size_t i = 0; i < rec.ids.size(); ++i) {
      if (m.bits[i] == 0 && rec.ids[i] != placeholder) {
        rec.ids[i] = placeholder;
        touched = true;
      }
    }
    if (touched) {
      // The ids no longer spell the original text.
      rec.text.clear();
      rec.offsets.clear();
    }
  }
  return out;
}

}  // namespace sdplm
