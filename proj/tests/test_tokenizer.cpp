#include <doctest.h>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "sdplm/errors.hpp"
#include "sdplm/rng.hpp"
#include "sdplm/tokenizer.hpp"

using namespace sdplm;

namespace {

Tokenizer::TrainOptions observed_alphabet() {
  Tokenizer::TrainOptions opt;
  opt.byte_fallback = false;
  return opt;
}

size_t alphabet_of(const std::vector<std::string>& texts) {
  std::set<char> chars;
  for (const auto& t : texts) chars.insert(t.begin(), t.end());
  return chars.size();
}

}  // namespace

TEST_CASE("bpe merge order on a repeated word") {
  const std::vector<std::string> texts = {"aaab aaab"};
  const size_t alphabet = alphabet_of(texts);  // 'a', 'b', ' '
  REQUIRE(alphabet == 3);
  Tokenizer tok = Tokenizer::train(texts, alphabet + 2, observed_alphabet());
  REQUIRE(tok.merges().size() == 2);
  CHECK(tok.merges()[0] == std::pair<std::string, std::string>("a", "a"));
  const auto& second = tok.merges()[1];
  const bool plausible = second == std::pair<std::string, std::string>("aa", "a") ||
                         second == std::pair<std::string, std::string>("aa", "b");
  CHECK(plausible);
}

TEST_CASE("zero merge budget yields a character-level tokenizer") {
  const std::vector<std::string> texts = {"hello there"};
  Tokenizer tok = Tokenizer::train(texts, alphabet_of(texts), observed_alphabet());
  CHECK(tok.merges().empty());
  CHECK(tok.encode("hello").size() == 5);
}

TEST_CASE("digit-free merges split numeric secrets") {
  // No digits in the merge corpus: any digit string stays un-merged.
  const std::vector<std::string> texts = {
      "the model of the train set was near the station",
      "where the things that the people said were said again"};
  Tokenizer::TrainOptions opt;
  opt.byte_fallback = true;
  Tokenizer tok = Tokenizer::train(texts, 300, opt);
  const auto ids = tok.encode("1234");
  CHECK(ids.size() >= 2);
  CHECK(tok.decode(ids) == "1234");
}

TEST_CASE("tokenizer training determinism") {
  const std::vector<std::string> texts = {"SYS: Hello there USR: hi hi hi",
                                          "USR: the parcel is late again"};
  Tokenizer a = Tokenizer::train(texts, 300);
  Tokenizer b = Tokenizer::train(texts, 300);
  CHECK(a.to_json() == b.to_json());
}

TEST_CASE("encode basics") {
  Tokenizer tok = Tokenizer::train({"My ID is 341752 and more text"}, 300);
  CHECK(tok.encode("").empty());
  CHECK(tok.decode(tok.encode("My ID is 341752")) == "My ID is 341752");

  // A single known symbol encodes to exactly its id.
  const std::string sym = tok.symbol(65);  // "A" under byte fallback
  REQUIRE(sym == "A");
  const auto ids = tok.encode("A");
  REQUIRE(ids.size() == 1);
  CHECK(ids[0] == 65);
}

TEST_CASE("offsets cover the input exactly") {
  Tokenizer tok = Tokenizer::train({"SYS: track the parcel USR: sure thing"}, 280);
  const std::string text = "USR: the parcel is with Betty Sims 341752";
  std::vector<std::pair<uint32_t, uint32_t>> offsets;
  const auto ids = tok.encode(text, &offsets);
  REQUIRE(offsets.size() == ids.size());
  uint32_t pos = 0;
  for (size_t i = 0; i < ids.size(); ++i) {
    CHECK(offsets[i].first == pos);
    CHECK(offsets[i].second - offsets[i].first == tok.symbol(ids[i]).size());
    pos = offsets[i].second;
  }
  CHECK(pos == text.size());
}

TEST_CASE("round-trip fuzz") {
  Tokenizer tok = Tokenizer::train(
      {"USR: hello there SYS:ail the 12 monkeys", "mixed 3481 content): !?"}, 300);
  Rng rng(20240817);
  const std::string printable =
      " abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789.,:;!?()";
  for (int round = 0; round < 200; ++round) {
    std::string s;
    const size_t len = rng.below(60);
    for (size_t i = 0; i < len; ++i) {
      if (rng.bernoulli(0.9)) {
        s.push_back(printable[rng.below(printable.size())]);
      } else {
        s.push_back(static_cast<char>(rng.below(256)));  // arbitrary bytes
      }
    }
    CHECK(tok.decode(tok.encode(s)) == s);
  }
}

TEST_CASE("vocabulary ids are dense and bounded") {
  Tokenizer tok = Tokenizer::train({"some words some words more words"}, 280);
  CHECK(tok.vocab_size() <= 280);
  for (size_t i = 0; i < tok.vocab_size(); ++i) {
    CHECK_NOTHROW(tok.symbol(static_cast<TokenId>(i)));
  }
  const auto ids = tok.encode("some more words");
  for (TokenId id : ids) {
    CHECK(id >= 0);
    CHECK(static_cast<size_t>(id) < tok.vocab_size());
  }
}

TEST_CASE("json round-trip preserves behavior") {
  Tokenizer::TrainOptions opt;
  opt.reserved_symbols = {"<num>"};
  Tokenizer tok = Tokenizer::train({"the 99 bottles fell off the wall"}, 300, opt);
  Tokenizer back = Tokenizer::from_json(tok.to_json());
  CHECK(back.to_json() == tok.to_json());
  const std::string probe = "the 99 bottles \xc3\xa9";
  CHECK(back.decode(back.encode(probe)) == probe);
  CHECK(back.reserved_id("<num>") == tok.reserved_id("<num>"));
}

TEST_CASE("save and load through a file") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "sdplm_tok_test";
  fs::create_directories(dir);
  Tokenizer tok = Tokenizer::train({"round trip me please"}, 280);
  const std::string path = (dir / "tok.json").string();
  tok.save(path);
  Tokenizer back = Tokenizer::load(path);
  CHECK(back.to_json() == tok.to_json());
  fs::remove_all(dir);
}

TEST_CASE("error paths") {
  CHECK_THROWS_AS(Tokenizer::train({}, 300), DataError);
  CHECK_THROWS_AS(Tokenizer::train({""}, 300), DataError);
  CHECK_THROWS_AS(Tokenizer::train({"abc"}, 2, observed_alphabet()), ConfigError);

  Tokenizer tok = Tokenizer::train({"abc abc"}, 4, observed_alphabet());
  CHECK_THROWS_AS(tok.encode("abcz"), DataError);

  CHECK_THROWS_AS(Tokenizer::from_json("{"), FormatError);
  CHECK_THROWS_AS(Tokenizer::from_json("{\"format\":\"other\"}"), FormatError);
  // Orphan multi-character symbol without a producing merge.
  CHECK_THROWS_AS(
      Tokenizer::from_json(R"({"format":"sdplm.tokenizer","version":1,
        "byte_fallback":false,"reserved":[],"merges":[],
        "vocab":{"a":0,"b":1,"ab":2}})"),
      FormatError);
}
