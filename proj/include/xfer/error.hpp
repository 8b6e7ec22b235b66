#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace xfer {

/// Invalid configuration or precondition violated by caller-provided settings.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A data record does not match the schema of its task format.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A model operation was attempted in the wrong lifecycle state (e.g. missing head).
class LifecycleError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Checkpoint container damaged (truncated, bad checksum, bad magic).
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint written by an incompatible container version.
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// Metric inputs violate a metric precondition (length mismatch, zero-norm vector, ...).
class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace xfer
