#include "sdplm/ledger.hpp"

#include <fstream>

#include <json.hpp>

#include "sdplm/errors.hpp"

namespace sdplm {

const char* to_string(LedgerEntry::Mechanism m) {
  switch (m) {
    case LedgerEntry::Mechanism::kGradientNoise:
      return "gradient-noise";
    case LedgerEntry::Mechanism::kStateNoise:
      return "state-noise";
  }
  return "unknown";
}

LedgerEntry::Mechanism mechanism_from_string(const std::string& s) {
  if (s == "gradient-noise") return LedgerEntry::Mechanism::kGradientNoise;
  if (s == "state-noise") return LedgerEntry::Mechanism::kStateNoise;
  throw FormatError("ledger: unknown mechanism '" + s + "'");
}

void PrivacyLedger::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("ledger: cannot write " + path);
  for (const auto& e : entries) {
    nlohmann::json j;
    j["mechanism"] = to_string(e.mechanism);
    j["q"] = e.q;
    j["sigma"] = e.sigma;
    j["step"] = e.step;
    f << j.dump() << "\n";
  }
}

PrivacyLedger PrivacyLedger::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("ledger: cannot read " + path);
  PrivacyLedger ledger;
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("ledger: invalid JSON on line " + std::to_string(lineno) +
                        ": " + e.what());
    }
    LedgerEntry entry;
    entry.mechanism = mechanism_from_string(j.at("mechanism").get<std::string>());
    entry.q = j.at("q").get<double>();
    entry.sigma = j.at("sigma").get<double>();
    entry.step = j.value("step", int64_t{0});
    ledger.entries.push_back(entry);
  }
  return ledger;
}

}  // namespace sdplm
