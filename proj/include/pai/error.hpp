#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pai {

enum class ErrorKind {
  EmptyTrace,
  NonMonotonicCounter,
  SchemaMismatch,
  ParseError,
  UnsupportedVersion,
  EmptyDataset,
  UnknownBenchmark,
  ShapeMismatch,
  MissingCache,
  InvalidSpec,
  UnnormalizedInput,
  CorruptCheckpoint,
  MissingLabels,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (and the CLI
/// exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class NonMonotonicCounter : public Error {
 public:
  NonMonotonicCounter(std::size_t feature, std::size_t index)
      : Error(ErrorKind::NonMonotonicCounter,
              "feature " + std::to_string(feature) + " decreases at snapshot " + std::to_string(index)),
        feature_(feature),
        index_(index) {}

  std::size_t feature() const noexcept { return feature_; }
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t feature_;
  std::size_t index_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& reason)
      : Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": " + reason), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyTrace: return "EmptyTrace";
    case ErrorKind::NonMonotonicCounter: return "NonMonotonicCounter";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::UnknownBenchmark: return "UnknownBenchmark";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::MissingCache: return "MissingCache";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::UnnormalizedInput: return "UnnormalizedInput";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::MissingLabels: return "MissingLabels";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace pai
