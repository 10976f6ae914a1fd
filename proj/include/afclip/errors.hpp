#pragma once

#include <stdexcept>
#include <string>

namespace afclip {

// Process exit codes, one per error class.
enum class ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
  kChecksum = 5,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode code() const noexcept { return ExitCode::kInternal; }
};

// Bad dimensions, invalid hyperparameters, unknown identifiers, missing paths.
class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode code() const noexcept override { return ExitCode::kConfig; }
};

// Unreadable or inconsistent dataset content.
class DataError : public Error {
 public:
  using Error::Error;
  ExitCode code() const noexcept override { return ExitCode::kData; }
};

// A metric that is undefined for its input (e.g. AUROC over one class).
class MetricError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
  ExitCode code() const noexcept override { return ExitCode::kNumeric; }
};

// Checkpoint or bank produced against different backbone weights.
class ChecksumError : public Error {
 public:
  using Error::Error;
  ExitCode code() const noexcept override { return ExitCode::kChecksum; }
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ConfigError(message);
}

}  // namespace afclip
