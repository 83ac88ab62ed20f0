#pragma once

#include <stdexcept>
#include <string>

namespace ssda {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed scene name, record, or file content.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& msg) : Error("parse error: " + msg) {}
};

/// Invalid configuration value or precondition violation.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

/// Unreadable input, schema violation, or failed I/O.
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error("data error: " + msg) {}
};

/// Operation on an empty manifest that requires records.
class EmptyManifestError : public DataError {
 public:
  explicit EmptyManifestError(const std::string& msg) : DataError("empty manifest: " + msg) {}
};

/// Tensor dimension mismatch.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

/// Structural mismatch between two parameter sets.
class StructureError : public Error {
 public:
  explicit StructureError(const std::string& msg) : Error("structure error: " + msg) {}
};

/// Evaluation is undefined for the given inputs (e.g. no ground truth).
class EvalError : public Error {
 public:
  explicit EvalError(const std::string& msg) : Error("eval error: " + msg) {}
};

/// Training-time failure.
class TrainError : public Error {
 public:
  explicit TrainError(const std::string& msg) : Error("train error: " + msg) {}
};

}  // namespace ssda
