#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sdplm {

// One noise-adding mechanism invocation. Regular (non-private) updates never
// appear here; they carry no privacy cost.
struct LedgerEntry {
  enum class Mechanism { kGradientNoise, kStateNoise };
  Mechanism mechanism = Mechanism::kGradientNoise;
  double q = 0.0;      // sampling rate of the step that invoked the mechanism
  double sigma = 0.0;  // noise multiplier
  int64_t step = 0;

  bool operator==(const LedgerEntry&) const = default;
};

const char* to_string(LedgerEntry::Mechanism m);
LedgerEntry::Mechanism mechanism_from_string(const std::string& s);

// Ordered record of every mechanism invocation of a training run; the
// accountant composes it into an (epsilon, delta) guarantee.
struct PrivacyLedger {
  std::vector<LedgerEntry> entries;

  void append(LedgerEntry::Mechanism m, double q, double sigma, int64_t step) {
    entries.push_back(LedgerEntry{m, q, sigma, step});
  }
  size_t size() const { return entries.size(); }
  bool operator==(const PrivacyLedger&) const = default;

  // JSONL, one entry per line.
  void save(const std::string& path) const;
  static PrivacyLedger load(const std::string& path);
};

}  // namespace sdplm
