#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdplm/corpus.hpp"
#include "sdplm/rng.hpp"
#include "sdplm/tokenizer.hpp"

namespace sdplm {

// A generated customer-service dialog, flattened to one line with SYS:/USR:
// role prefixes. `fills` records the byte span and slot type of every value
// substituted into the agenda templates.
struct RawDialog {
  std::string text;
  struct Fill {
    uint32_t begin = 0;
    uint32_t end = 0;
    std::string slot_type;  // name | address | phone | order_id | tracking
  };
  std::vector<Fill> fills;
};

// Dialog agendas as utterance templates. Slot placeholders are written
// {name}, {address}, {phone}, {order_id}, {tracking}.
struct DialogTemplates {
  struct Turn {
    bool user = false;
    std::vector<std::string> variants;
  };
  struct Agenda {
    std::string name;
    std::vector<Turn> turns;
  };
  std::vector<Agenda> agendas;

  static const DialogTemplates& builtin();
};

// Deterministic per (n, seed, templates). Slot values come from the bundled
// fake-identity grammars below; no external data.
std::vector<RawDialog> synth_dialogs(size_t n, uint64_t seed,
                                     const DialogTemplates& templates =
                                         DialogTemplates::builtin());

// Tokenizes dialogs and converts fill byte spans to token spans. A token
// partially overlapping a fill counts as part of the span.
Corpus tokenize_dialogs(const std::vector<RawDialog>& dialogs,
                        const Tokenizer& tok, std::string split);

// Slot value grammars, shared by the generator, the built-in "customersim"
// policy, and attack decoy generation.
namespace grammars {

const std::vector<std::string>& first_names();
const std::vector<std::string>& last_names();

std::string random_name(Rng& rng);
std::string random_address(Rng& rng);
std::string random_phone(Rng& rng);
std::string random_order_id(Rng& rng);
std::string random_tracking(Rng& rng);
std::string random_value(const std::string& slot_type, Rng& rng);

// Regex sources matching exactly the strings the generators above produce.
std::string name_pattern();
std::string address_pattern();
std::string phone_pattern();
std::string order_id_pattern();
std::string tracking_pattern();

}  // namespace grammars

}  // namespace sdplm
