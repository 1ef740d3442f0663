#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace sdplm {

using TokenId = int32_t;

// Byte-level BPE tokenizer.
//
// Symbols are byte strings. The base alphabet is either the set of bytes
// observed in the training texts or, with byte_fallback on, all 256 byte
// values. Reserved symbols (e.g. an anonymization placeholder) get ids after
// the alphabet and are never produced by encode(); they exist so corpora can
// be rewritten at the id level without retraining.
//
// encode(decode(ids)) need not be the identity, but decode(encode(text))
// always is: every token's symbol is a verbatim substring of the input.
class Tokenizer {
 public:
  Tokenizer() = default;  // empty; populate via train() or load()

  struct TrainOptions {
    bool byte_fallback = true;
    std::vector<std::string> reserved_symbols;
  };

  // Learns merges from `texts` until the vocabulary reaches `vocab_size`
  // symbols or no pair repeats. Merge selection: highest pair frequency,
  // ties broken by the lexicographically smallest concatenated symbol.
  static Tokenizer train(const std::vector<std::string>& texts,
                         size_t vocab_size, TrainOptions options);
  static Tokenizer train(const std::vector<std::string>& texts, size_t vocab_size) {
    return train(texts, vocab_size, TrainOptions());
  }

  std::vector<TokenId> encode(const std::string& text) const;

  // Byte span [begin, end) of each token in the source text.
  std::vector<TokenId> encode(const std::string& text,
                              std::vector<std::pair<uint32_t, uint32_t>>* offsets) const;

  std::string decode(const std::vector<TokenId>& ids) const;

  // Symbol string for one id.
  const std::string& symbol(TokenId id) const;

  size_t vocab_size() const { return symbols_.size(); }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  bool byte_fallback() const { return byte_fallback_; }

  // Id of a reserved symbol; throws ConfigError if absent.
  TokenId reserved_id(const std::string& symbol) const;
  bool has_symbol(const std::string& symbol) const;

  // JSON serialization. Non-UTF-8 byte symbols are escaped as \xNN.
  std::string to_json() const;
  static Tokenizer from_json(const std::string& json_text);
  void save(const std::string& path) const;
  static Tokenizer load(const std::string& path);

 private:
  void build_lookup();
  std::vector<TokenId> encode_piece(const char* data, size_t len) const;

  std::vector<std::string> symbols_;                    // id -> symbol, dense
  std::unordered_map<std::string, TokenId> symbol_ids_; // symbol -> id
  std::vector<std::pair<std::string, std::string>> merges_;
  // (left id, right id) -> (rank, merged id), for fast encoding
  std::unordered_map<uint64_t, std::pair<uint32_t, TokenId>> merge_lookup_;
  std::vector<std::string> reserved_;
  bool byte_fallback_ = true;
};

}  // namespace sdplm
