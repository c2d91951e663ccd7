#pragma once

#include <iostream>
#include <stdexcept>
#include <string>

namespace edgefilter {

// Non-fatal diagnostics (degenerate variance, skipped ablation cells).
inline void emit_warning(const std::string& msg) {
  std::cerr << "warning: " << msg << "\n";
}

// Error taxonomy shared by every module. Each type maps onto one failure
// class so callers (and the CLI exit-code mapping) can dispatch on it.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layout dimensions do not line up.
struct ShapeError : Error {
  using Error::Error;
};

// A user-supplied configuration value is invalid.
struct ConfigError : Error {
  using Error::Error;
};

// A file does not conform to its on-disk format.
struct FormatError : Error {
  using Error::Error;
};

// Dataset-level inconsistency (counts, label ranges, subset sizes).
struct DataError : Error {
  using Error::Error;
};

// An API contract was violated (non-scalar loss, reused tape, frozen
// parameters receiving gradients).
struct ContractError : Error {
  using Error::Error;
};

// Training produced a non-finite loss.
struct TrainingDiverged : Error {
  using Error::Error;
};

// Standard deviation of a baseline cell is zero; sigma gains are undefined.
struct DegenerateSD : Error {
  using Error::Error;
};

}  // namespace edgefilter
