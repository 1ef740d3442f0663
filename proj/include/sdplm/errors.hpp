#pragma once

#include <stdexcept>
#include <string>

namespace sdplm {

// Invalid configuration: bad parameter combinations, unknown regimes,
// malformed config files. CLI exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Problems with input data: empty corpora, unreadable files, malformed
// records. CLI exit code 3.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Mismatched tensor/mask/sequence shapes.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Inconsistent attack/canary specifications (e.g. fill not drawable from the
// declared alphabet, overlapping member/nonmember sets).
struct SpecError : std::runtime_error {
  explicit SpecError(const std::string& msg) : std::runtime_error(msg) {}
};

// Accountant called with parameters outside its domain.
struct AccountingError : std::runtime_error {
  explicit AccountingError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced non-finite values or the validation perplexity blew
// past the divergence threshold. CLI exit code 4.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// Corrupt or version-mismatched serialized artifacts.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse, e.g. consuming a backward tape twice.
struct UsageError : std::logic_error {
  explicit UsageError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace sdplm
