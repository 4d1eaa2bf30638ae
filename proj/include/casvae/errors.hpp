#pragma once

#include <stdexcept>
#include <string>

namespace casvae {

/// Base class for all library errors; catch this at CLI boundaries.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor/matrix shape inconsistencies.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& msg) : Error("dimension error: " + msg) {}
};

/// Bad configuration: unknown keys, unparsable or out-of-range values.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

/// File-format and filesystem failures (bad magic, truncation, unwritable paths).
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

/// Data-content violations: missing labels, zero-variance channels, degenerate geometry.
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error("data error: " + msg) {}
};

/// Training-time failures (divergence, non-finite losses).
class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& msg) : Error("training error: " + msg) {}
};

}  // namespace casvae
