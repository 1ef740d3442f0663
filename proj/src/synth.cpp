#include "sdplm/synth.hpp"

#include <sstream>

#include "sdplm/errors.hpp"

namespace sdplm {
namespace grammars {
namespace {

const std::vector<std::string> kFirstNames = {
    "Betty",   "Oliver",  "Amelia",  "Jack",    "Sophia",  "Henry",
    "Isla",    "George",  "Ava",     "Noah",    "Emily",   "Leo",
    "Mia",     "Arthur",  "Grace",   "Oscar",   "Lily",    "Freddie",
    "Ella",    "Theo",    "Ruby",    "Finley",  "Chloe",   "Alfie",
    "Daisy",   "Samuel",  "Hannah",  "Joshua",  "Alice",   "Edward",
    "Zoe",     "Harvey",  "Megan",   "Caleb",   "Nora",    "Dylan",
    "Violet",  "Ethan",   "Clara",   "Martin",  "Ivy",     "Reuben",
    "Esther",  "Albert",  "Flora",   "Hugo",    "Pearl",   "Stanley"};

const std::vector<std::string> kLastNames = {
    "Sims",     "Walker",  "Hughes",  "Porter",   "Bennett", "Foster",
    "Griffin",  "Hayes",   "Palmer",  "Barker",   "Dawson",  "Ellis",
    "Fleming",  "Gibson",  "Holland", "Jennings", "Keller",  "Lawson",
    "Mercer",   "Norris",  "Osborne", "Page",     "Quinn",   "Radford",
    "Sharpe",   "Tucker",  "Vaughan", "Webster",  "Youngs",  "Abbott",
    "Bradshaw", "Carver",  "Drummond","Eastwood", "Farley",  "Goddard",
    "Harding",  "Ingram",  "Jarvis",  "Kendall",  "Lockwood","Maddox",
    "Naylor",   "Ogden",   "Pickett", "Rowley",   "Stanton", "Thorne"};

// Street names stay disjoint from the name lists so the name pattern never
// fires inside an address.
const std::vector<std::string> kStreetNames = {
    "Fitzgerald", "Maple",    "Cedar",   "Willow",   "Juniper", "Larch",
    "Hawthorn",   "Bramble",  "Foxglove","Heather",  "Clover",  "Aspen",
    "Birch",      "Rowan",    "Alder",   "Linden",   "Magnolia","Primrose",
    "Tamarind",   "Sycamore", "Chestnut","Mulberry", "Hazel",   "Laurel"};

const std::vector<std::string> kStreetTypes = {
    "Street", "Avenue", "Viaduct", "Lane", "Road", "Court", "Drive", "Terrace"};

const std::vector<std::string> kCityPrefixes = {
    "Brown", "Clear", "Green", "Stone", "River", "Lake", "Fair", "Glen",
    "Oak",   "Ash",   "Mill",  "Spring"};

const std::vector<std::string> kCitySuffixes = {
    "view", "field", "ford", "haven", "crest", "dale", "brook", "port"};

const std::vector<std::string> kStates = {
    "OK", "CA", "TX", "NY", "WA", "OR", "CO", "AZ", "NV", "UT",
    "NM", "ID", "MT", "KS", "NE", "IA", "MO", "AR", "LA", "GA"};

std::string join_alternation(const std::vector<std::string>& words) {
  std::string out = "(?:";
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += "|";
    out += words[i];
  }
  out += ")";
  return out;
}

std::string random_digits(Rng& rng, size_t n) {
  std::string out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    out.push_back(static_cast<char>('0' + rng.below(10)));
  }
  return out;
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[rng.below(v.size())];
}

}  // namespace

const std::vector<std::string>& first_names() { return kFirstNames; }
const std::vector<std::string>& last_names() { return kLastNames; }

std::string random_name(Rng& rng) {
  return pick(kFirstNames, rng) + " " + pick(kLastNames, rng);
}

std::string random_address(Rng& rng) {
  std::ostringstream out;
  out << (1 + rng.below(9899)) << " " << pick(kStreetNames, rng) << " "
      << pick(kStreetTypes, rng) << " " << pick(kCityPrefixes, rng)
      << pick(kCitySuffixes, rng) << ", " << pick(kStates, rng) << " "
      << random_digits(rng, 5);
  return out.str();
}

std::string random_phone(Rng& rng) {
  return random_digits(rng, 3) + "-" + random_digits(rng, 3) + "-" +
         random_digits(rng, 4);
}

std::string random_order_id(Rng& rng) { return "ORD" + random_digits(rng, 7); }

std::string random_tracking(Rng& rng) {
  static const char kUpper[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZ";
  static const char kUpperDigit[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
  std::string out;
  out.push_back(kUpper[rng.below(26)]);
  for (int i = 0; i < 9; ++i) out.push_back(kUpperDigit[rng.below(36)]);
  return out;
}

std::string random_value(const std::string& slot_type, Rng& rng) {
  if (slot_type == "name") return random_name(rng);
  if (slot_type == "address") return random_address(rng);
  if (slot_type == "phone") return random_phone(rng);
  if (slot_type == "order_id") return random_order_id(rng);
  if (slot_type == "tracking") return random_tracking(rng);
  throw ConfigError("synth: unknown slot type '" + slot_type + "'");
}

std::string name_pattern() {
  return join_alternation(kFirstNames) + " " + join_alternation(kLastNames);
}

std::string address_pattern() {
  return "[0-9]{1,4} " + join_alternation(kStreetNames) + " " +
         join_alternation(kStreetTypes) + " [A-Z][a-z]+, [A-Z]{2} [0-9]{5}";
}

std::string phone_pattern() { return "[0-9]{3}-[0-9]{3}-[0-9]{4}"; }

std::string order_id_pattern() { return "ORD[0-9]{7}"; }

std::string tracking_pattern() { return "[A-Z][A-Z0-9]{9}"; }

}  // namespace grammars

const DialogTemplates& DialogTemplates::builtin() {
  static const DialogTemplates kBuiltin = [] {
    DialogTemplates t;
    auto sys = [](std::vector<std::string> v) {
      return DialogTemplates::Turn{false, std::move(v)};
    };
    auto usr = [](std::vector<std::string> v) {
      return DialogTemplates::Turn{true, std::move(v)};
    };

    DialogTemplates::Agenda track;
    track.name = "track_package";
    track.turns = {
        sys({"Hello, what can I do for you?",
             "Hi, how can I help you today?"}),
        usr({"Could you please help me track my package?",
             "I want to check where my parcel is."}),
        sys({"Please provide your full name.", "Sure. What is your full name?"}),
        usr({"Sure, {name}.", "It is {name}."}),
        sys({"Could you confirm your shipping address?",
             "Can you confirm the address on the account?"}),
        usr({"Yea sure, {address}.", "Yes, {address}."}),
        sys({"Thanks {name}. Track your order using your tracking number, "
             "{tracking}.",
             "Thanks {name}. The parcel ships under tracking number "
             "{tracking}."}),
        usr({"That's it.", "Great, thank you."}),
    };

    DialogTemplates::Agenda status;
    status.name = "order_status";
    status.turns = {
        sys({"Hello, what can I do for you?",
             "Welcome to support. How can I help?"}),
        usr({"Has my order shipped yet?", "What is the status of my order?"}),
        sys({"Please provide your full name.", "Happy to help. Your full name?"}),
        usr({"It is {name}.", "{name}."}),
        sys({"Could you read me the order number?", "And the order number?"}),
        usr({"Yes, the order number is {order_id}.", "Sure, {order_id}."}),
        sys({"Order {order_id} left the warehouse under tracking number "
             "{tracking}.",
             "Found it. Order {order_id} ships tomorrow, tracking number "
             "{tracking}."}),
        usr({"Perfect, thanks.", "That is all, goodbye."}),
    };

    DialogTemplates::Agenda refund;
    refund.name = "refund_request";
    refund.turns = {
        sys({"Hello, what can I do for you?", "Hi, how can I help you today?"}),
        usr({"My delivery arrived broken and I would like a refund.",
             "I want a refund for a damaged item."}),
        sys({"Sorry to hear that. Please provide your full name.",
             "Apologies. May I have your full name?"}),
        usr({"{name}.", "My name is {name}."}),
        sys({"Could you confirm the phone number on the account?",
             "What is the best phone number to reach you?"}),
        usr({"It is {phone}.", "You can reach me at {phone}."}),
        sys({"Thank you {name}. The refund for order {order_id} is filed.",
             "Done. I filed the refund for order {order_id}."}),
        usr({"That works, thank you.", "Thanks for the quick help."}),
    };

    DialogTemplates::Agenda address_change;
    address_change.name = "update_address";
    address_change.turns = {
        sys({"Hello, what can I do for you?", "Hi, what do you need today?"}),
        usr({"I need to update my delivery address.",
             "Please change the shipping address on my account."}),
        sys({"Of course. Please provide your full name.",
             "Sure. Can you give me your full name?"}),
        usr({"Sure, {name}.", "It is {name}."}),
        sys({"What is the new delivery address?",
             "Please read me the new address."}),
        usr({"The new address is {address}.", "{address}."}),
        sys({"All set {name}. Orders ship to the new address.",
             "Updated. Your order {order_id} goes to the new address."}),
        usr({"That's it.", "All good, thanks."}),
    };

    t.agendas = {track, status, refund, address_change};
    return t;
  }();
  return kBuiltin;
}

std::vector<RawDialog> synth_dialogs(size_t n, uint64_t seed,
                                     const DialogTemplates& templates) {
  if (n == 0) throw ConfigError("synth: dialog count must be positive");
  if (templates.agendas.empty()) throw ConfigError("synth: no agendas");
  Rng rng(derive_seed(seed, "synth-dialogs"));
  std::vector<RawDialog> dialogs;
  dialogs.reserve(n);
  for (size_t d = 0; d < n; ++d) {
    const auto& agenda = templates.agendas[rng.below(templates.agendas.size())];
    RawDialog dialog;
    // Slot values are drawn once per dialog so repeated mentions (e.g. the
    // order id in the confirmation) stay consistent.
    std::vector<std::pair<std::string, std::string>> values;
    auto value_of = [&](const std::string& slot) -> const std::string& {
      for (const auto& [k, v] : values) {
        if (k == slot) return v;
      }
      values.emplace_back(slot, grammars::random_value(slot, rng));
      return values.back().second;
    };
    for (size_t t = 0; t < agenda.turns.size(); ++t) {
      const auto& turn = agenda.turns[t];
      const std::string& tmpl = turn.variants[rng.below(turn.variants.size())];
      if (t > 0) dialog.text += " ";
      dialog.text += turn.user ? "USR: " : "SYS: ";
      for (size_t i = 0; i < tmpl.size();) {
        if (tmpl[i] == '{') {
          const size_t close = tmpl.find('}', i);
          if (close == std::string::npos) {
            throw ConfigError("synth: unterminated slot in template");
          }
          const std::string slot = tmpl.substr(i + 1, close - i - 1);
          const std::string& value = value_of(slot);
          RawDialog::Fill fill;
          fill.begin = static_cast<uint32_t>(dialog.text.size());
          dialog.text += value;
          fill.end = static_cast<uint32_t>(dialog.text.size());
          fill.slot_type = slot;
          dialog.fills.push_back(std::move(fill));
          i = close + 1;
        } else {
          dialog.text.push_back(tmpl[i]);
          ++i;
        }
      }
    }
    dialogs.push_back(std::move(dialog));
  }
  return dialogs;
}

Corpus tokenize_dialogs(const std::vector<RawDialog>& dialogs,
                        const Tokenizer& tok, std::string split) {
  Corpus c;
  c.split = std::move(split);
  c.provenance = Provenance::kSyntheticDialog;
  c.records.reserve(dialogs.size());
  for (size_t d = 0; d < dialogs.size(); ++d) {
    TokenSeq seq;
    seq.text = dialogs[d].text;
    seq.ids = tok.encode(seq.text, &seq.offsets);
    for (const auto& fill : dialogs[d].fills) {
      // Tokens overlapping the fill span, rounded outward.
      uint32_t start = 0, end = 0;
      bool any = false;
      for (uint32_t i = 0; i < seq.offsets.size(); ++i) {
        const auto [tb, te] = seq.offsets[i];
        if (tb < fill.end && fill.begin < te) {
          if (!any) start = i;
          end = i + 1;
          any = true;
        }
      }
      if (any) {
        c.pii_spans.push_back(PiiSpan{static_cast<uint32_t>(d), start, end,
                                      fill.slot_type});
      }
    }
    c.records.push_back(std::move(seq));
  }
  return c;
}

}  // namespace sdplm
