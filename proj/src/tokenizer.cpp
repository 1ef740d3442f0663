#include "sdplm/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "sdplm/errors.hpp"

namespace sdplm {
namespace {

uint64_t pair_key(TokenId l, TokenId r) {
  return (static_cast<uint64_t>(static_cast<uint32_t>(l)) << 32) |
         static_cast<uint32_t>(r);
}

bool is_space_byte(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

// Maximal runs of whitespace / non-whitespace. Merges never cross a piece
// boundary, so concatenating token symbols reproduces the input verbatim.
std::vector<std::pair<size_t, size_t>> split_pieces(const std::string& text) {
  std::vector<std::pair<size_t, size_t>> pieces;
  size_t i = 0;
  while (i < text.size()) {
    size_t j = i + 1;
    const bool ws = is_space_byte(static_cast<unsigned char>(text[i]));
    while (j < text.size() &&
           is_space_byte(static_cast<unsigned char>(text[j])) == ws) {
      ++j;
    }
    pieces.emplace_back(i, j);
    i = j;
  }
  return pieces;
}

std::string escape_symbol(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : s) {
    if (c >= 0x20 && c < 0x7f && c != '\\') {
      out.push_back(static_cast<char>(c));
    } else {
      static const char* hex = "0123456789abcdef";
      out += "\\x";
      out.push_back(hex[c >> 4]);
      out.push_back(hex[c & 0xf]);
    }
  }
  return out;
}

std::string unescape_symbol(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (size_t i = 0; i < s.size();) {
    if (s[i] == '\\' && i + 3 < s.size() && s[i + 1] == 'x') {
      auto nibble = [&](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw FormatError("tokenizer: bad \\x escape in symbol");
      };
      out.push_back(static_cast<char>(nibble(s[i + 2]) * 16 + nibble(s[i + 3])));
      i += 4;
    } else {
      out.push_back(s[i]);
      ++i;
    }
  }
  return out;
}

struct Piece {
  std::vector<TokenId> syms;
  int64_t count = 0;
};

}  // namespace

Tokenizer Tokenizer::train(const std::vector<std::string>& texts,
                           size_t vocab_size, TrainOptions options) {
  size_t total_bytes = 0;
  for (const auto& t : texts) total_bytes += t.size();
  if (texts.empty() || total_bytes == 0) {
    throw DataError("tokenizer: training corpus is empty");
  }

  Tokenizer tok;
  tok.byte_fallback_ = options.byte_fallback;
  tok.reserved_ = options.reserved_symbols;

  // Base alphabet.
  if (options.byte_fallback) {
    for (int b = 0; b < 256; ++b) {
      tok.symbols_.push_back(std::string(1, static_cast<char>(b)));
    }
  } else {
    std::set<unsigned char> seen;
    for (const auto& t : texts) {
      for (unsigned char c : t) seen.insert(c);
    }
    for (unsigned char c : seen) {
      tok.symbols_.push_back(std::string(1, static_cast<char>(c)));
    }
  }
  const size_t floor_size = tok.symbols_.size() + tok.reserved_.size();
  if (vocab_size < floor_size) {
    std::ostringstream msg;
    msg << "tokenizer: vocab_size " << vocab_size << " is below the base "
        << "alphabet plus reserved symbols (" << floor_size << ")";
    throw ConfigError(msg.str());
  }
  for (const auto& r : tok.reserved_) {
    if (r.empty()) throw ConfigError("tokenizer: empty reserved symbol");
    tok.symbols_.push_back(r);
  }
  tok.build_lookup();

  // Unique pieces with counts.
  std::unordered_map<std::string, int64_t> piece_counts;
  for (const auto& t : texts) {
    for (auto [b, e] : split_pieces(t)) {
      piece_counts[t.substr(b, e - b)] += 1;
    }
  }
  std::vector<Piece> pieces;
  pieces.reserve(piece_counts.size());
  {
    // Sorted for run-to-run determinism of the data structures.
    std::vector<const std::string*> keys;
    keys.reserve(piece_counts.size());
    for (const auto& [k, _] : piece_counts) keys.push_back(&k);
    std::sort(keys.begin(), keys.end(),
              [](const std::string* a, const std::string* b) { return *a < *b; });
    for (const std::string* k : keys) {
      Piece p;
      p.count = piece_counts.at(*k);
      p.syms.reserve(k->size());
      for (unsigned char c : *k) {
        auto it = tok.symbol_ids_.find(std::string(1, static_cast<char>(c)));
        p.syms.push_back(it->second);  // alphabet covers the corpus by construction
      }
      pieces.push_back(std::move(p));
    }
  }

  std::unordered_map<uint64_t, int64_t> pair_counts;
  std::unordered_map<uint64_t, std::unordered_set<uint32_t>> pair_pieces;
  auto add_piece_pairs = [&](uint32_t idx, int sign) {
    const Piece& p = pieces[idx];
    for (size_t i = 0; i + 1 < p.syms.size(); ++i) {
      const uint64_t key = pair_key(p.syms[i], p.syms[i + 1]);
      pair_counts[key] += sign * p.count;
      if (sign > 0) {
        pair_pieces[key].insert(idx);
      }
    }
  };
  for (uint32_t i = 0; i < pieces.size(); ++i) add_piece_pairs(i, +1);

  while (tok.symbols_.size() < vocab_size) {
    // Best pair: max count, ties to the smallest concatenated symbol.
    uint64_t best_key = 0;
    int64_t best_count = 0;
    std::string best_concat;
    for (const auto& [key, count] : pair_counts) {
      if (count < 2 || count < best_count) continue;
      const TokenId l = static_cast<TokenId>(key >> 32);
      const TokenId r = static_cast<TokenId>(key & 0xffffffffu);
      std::string concat = tok.symbols_[l] + tok.symbols_[r];
      if (count > best_count || concat < best_concat) {
        best_count = count;
        best_key = key;
        best_concat = std::move(concat);
      }
    }
    if (best_count < 2) break;  // nothing repeats, further merges are pointless

    const TokenId l = static_cast<TokenId>(best_key >> 32);
    const TokenId r = static_cast<TokenId>(best_key & 0xffffffffu);
    const TokenId merged = static_cast<TokenId>(tok.symbols_.size());
    tok.symbols_.push_back(best_concat);
    tok.symbol_ids_[best_concat] = merged;
    tok.merge_lookup_[best_key] = {static_cast<uint32_t>(tok.merges_.size()), merged};
    tok.merges_.emplace_back(tok.symbols_[l], tok.symbols_[r]);

    auto affected_it = pair_pieces.find(best_key);
    if (affected_it == pair_pieces.end()) break;
    std::vector<uint32_t> affected(affected_it->second.begin(), affected_it->second.end());
    std::sort(affected.begin(), affected.end());
    for (uint32_t idx : affected) {
      Piece& p = pieces[idx];
      // Remove this piece's contributions, rewrite, re-add.
      for (size_t i = 0; i + 1 < p.syms.size(); ++i) {
        const uint64_t key = pair_key(p.syms[i], p.syms[i + 1]);
        pair_counts[key] -= p.count;
        auto pp = pair_pieces.find(key);
        if (pp != pair_pieces.end()) pp->second.erase(idx);
      }
      std::vector<TokenId> out;
      out.reserve(p.syms.size());
      for (size_t i = 0; i < p.syms.size();) {
        if (i + 1 < p.syms.size() && p.syms[i] == l && p.syms[i + 1] == r) {
          out.push_back(merged);
          i += 2;
        } else {
          out.push_back(p.syms[i]);
          i += 1;
        }
      }
      p.syms = std::move(out);
      add_piece_pairs(idx, +1);
    }
    // Drop exhausted entries so the scan stays tight.
    for (auto it = pair_counts.begin(); it != pair_counts.end();) {
      if (it->second < 2) {
        pair_pieces.erase(it->first);
        it = pair_counts.erase(it);
      } else {
        ++it;
      }
    }
  }
  return tok;
}

void Tokenizer::build_lookup() {
  symbol_ids_.clear();
  for (size_t i = 0; i < symbols_.size(); ++i) {
    symbol_ids_[symbols_[i]] = static_cast<TokenId>(i);
  }
}

std::vector<TokenId> Tokenizer::encode_piece(const char* data, size_t len) const {
  std::vector<TokenId> syms;
  syms.reserve(len);
  for (size_t i = 0; i < len; ++i) {
    auto it = symbol_ids_.find(std::string(1, data[i]));
    if (it == symbol_ids_.end()) {
      std::ostringstream msg;
      msg << "tokenizer: byte 0x" << std::hex
          << static_cast<int>(static_cast<unsigned char>(data[i]))
          << " not in vocabulary and byte_fallback is off";
      throw DataError(msg.str());
    }
    syms.push_back(it->second);
  }
  // Apply merges in rank order until none match.
  while (syms.size() >= 2) {
    uint32_t best_rank = std::numeric_limits<uint32_t>::max();
    TokenId best_merged = -1;
    TokenId bl = -1, br = -1;
    for (size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = merge_lookup_.find(pair_key(syms[i], syms[i + 1]));
      if (it != merge_lookup_.end() && it->second.first < best_rank) {
        best_rank = it->second.first;
        best_merged = it->second.second;
        bl = syms[i];
        br = syms[i + 1];
      }
    }
    if (best_merged < 0) break;
    std::vector<TokenId> out;
    out.reserve(syms.size());
    for (size_t i = 0; i < syms.size();) {
      if (i + 1 < syms.size() && syms[i] == bl && syms[i + 1] == br) {
        out.push_back(best_merged);
        i += 2;
      } else {
        out.push_back(syms[i]);
        i += 1;
      }
    }
    syms = std::move(out);
  }
  return syms;
}

std::vector<TokenId> Tokenizer::encode(const std::string& text) const {
  return encode(text, nullptr);
}

std::vector<TokenId> Tokenizer::encode(
    const std::string& text,
    std::vector<std::pair<uint32_t, uint32_t>>* offsets) const {
  std::vector<TokenId> ids;
  if (offsets) offsets->clear();
  for (auto [b, e] : split_pieces(text)) {
    std::vector<TokenId> piece = encode_piece(text.data() + b, e - b);
    size_t pos = b;
    for (TokenId id : piece) {
      const size_t n = symbols_[id].size();
      if (offsets) {
        offsets->emplace_back(static_cast<uint32_t>(pos),
                              static_cast<uint32_t>(pos + n));
      }
      pos += n;
      ids.push_back(id);
    }
  }
  return ids;
}

std::string Tokenizer::decode(const std::vector<TokenId>& ids) const {
  std::string out;
  for (TokenId id : ids) out += symbol(id);
  return out;
}

const std::string& Tokenizer::symbol(TokenId id) const {
  if (id < 0 || static_cast<size_t>(id) >= symbols_.size()) {
    throw ShapeError("tokenizer: token id out of range");
  }
  return symbols_[id];
}

TokenId Tokenizer::reserved_id(const std::string& sym) const {
  if (std::find(reserved_.begin(), reserved_.end(), sym) == reserved_.end()) {
    throw ConfigError("tokenizer: '" + sym + "' is not a reserved symbol");
  }
  return symbol_ids_.at(sym);
}

bool Tokenizer::has_symbol(const std::string& sym) const {
  return symbol_ids_.count(sym) > 0;
}

std::string Tokenizer::to_json() const {
  nlohmann::json j;
  j["format"] = "sdplm.tokenizer";
  j["version"] = 1;
  j["byte_fallback"] = byte_fallback_;
  nlohmann::json reserved = nlohmann::json::array();
  for (const auto& r : reserved_) reserved.push_back(escape_symbol(r));
  j["reserved"] = reserved;
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& [l, r] : merges_) {
    merges.push_back({escape_symbol(l), escape_symbol(r)});
  }
  j["merges"] = merges;
  nlohmann::json vocab = nlohmann::json::object();
  for (size_t i = 0; i < symbols_.size(); ++i) {
    vocab[escape_symbol(symbols_[i])] = i;
  }
  j["vocab"] = vocab;
  return j.dump(2);
}

Tokenizer Tokenizer::from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("tokenizer: invalid JSON: ") + e.what());
  }
  if (!j.contains("format") || j["format"] != "sdplm.tokenizer") {
    throw FormatError("tokenizer: not a tokenizer file");
  }
  if (j.value("version", 0) != 1) {
    throw FormatError("tokenizer: unsupported version");
  }
  Tokenizer tok;
  tok.byte_fallback_ = j.value("byte_fallback", true);
  for (const auto& r : j.at("reserved")) {
    tok.reserved_.push_back(unescape_symbol(r.get<std::string>()));
  }
  const auto& vocab = j.at("vocab");
  tok.symbols_.resize(vocab.size());
  std::vector<bool> seen(vocab.size(), false);
  for (auto it = vocab.begin(); it != vocab.end(); ++it) {
    const size_t id = it.value().get<size_t>();
    if (id >= tok.symbols_.size() || seen[id]) {
      throw FormatError("tokenizer: vocabulary ids are not dense");
    }
    seen[id] = true;
    tok.symbols_[id] = unescape_symbol(it.key());
  }
  tok.build_lookup();
  std::unordered_set<std::string> producible;
  for (const auto& m : j.at("merges")) {
    const std::string l = unescape_symbol(m.at(0).get<std::string>());
    const std::string r = unescape_symbol(m.at(1).get<std::string>());
    auto li = tok.symbol_ids_.find(l);
    auto ri = tok.symbol_ids_.find(r);
    auto mi = tok.symbol_ids_.find(l + r);
    if (li == tok.symbol_ids_.end() || ri == tok.symbol_ids_.end() ||
        mi == tok.symbol_ids_.end()) {
      throw FormatError("tokenizer: merge references unknown symbol");
    }
    tok.merge_lookup_[pair_key(li->second, ri->second)] = {
        static_cast<uint32_t>(tok.merges_.size()), mi->second};
    tok.merges_.emplace_back(l, r);
    producible.insert(l + r);
  }
  for (const auto& s : tok.symbols_) {
    if (s.size() > 1 && !producible.count(s) &&
        std::find(tok.reserved_.begin(), tok.reserved_.end(), s) ==
            tok.reserved_.end()) {
      throw FormatError("tokenizer: orphan symbol '" + escape_symbol(s) +
                        "' is not producible by the merge list");
    }
  }
  return tok;
}

void Tokenizer::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("tokenizer: cannot write " + path);
  f << to_json() << "\n";
}

Tokenizer Tokenizer::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("tokenizer: cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json(ss.str());
}

}  // namespace sdplm
