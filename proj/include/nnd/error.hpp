#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace nnd {

/// Invalid configuration: bad specs, shape mismatches, unknown JSON keys.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shape disagreement; carries the offending dimensions in the message.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// API misuse that is not a configuration problem (e.g. backward on a non-scalar).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Missing files, empty sample sets, I/O failures.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed binary input. `offset` is the byte position where parsing failed.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : DataError(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Non-finite values during training; `iteration` is where it was detected.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::int64_t iteration)
      : std::runtime_error(what + " at iteration " + std::to_string(iteration)), iteration_(iteration) {}

  std::int64_t iteration() const noexcept { return iteration_; }

 private:
  std::int64_t iteration_;
};

}  // namespace nnd
