#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace resofit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParameterDomainError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation does not hold (e.g. too few points).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class NoResonanceError : public Error {
 public:
  using Error::Error;
};

class SingularJacobianError : public Error {
 public:
  using Error::Error;
};

class NonConvergenceError : public Error {
 public:
  using Error::Error;
};

class InsufficientSpanError : public Error {
 public:
  using Error::Error;
};

class InsufficientPowersError : public Error {
 public:
  using Error::Error;
};

class BifurcationUnstableError : public Error {
 public:
  using Error::Error;
};

class LowSignalError : public Error {
 public:
  using Error::Error;
};

class InternalConsistencyError : public Error {
 public:
  using Error::Error;
};

class SegmentationMismatchError : public Error {
 public:
  SegmentationMismatchError(std::size_t expected, std::vector<double> found_centers);

  std::size_t expected() const { return expected_; }
  const std::vector<double>& found_centers() const { return found_centers_; }

 private:
  std::size_t expected_;
  std::vector<double> found_centers_;
};

enum class ParseErrorKind {
  kIo,
  kMalformedRow,
  kNonMonotoneFrequency,
  kMissingMetadata,
  kMissingHeader,
  kUnsupportedFormat,
  kMalformedOptionLine,
};

const char* to_string(ParseErrorKind kind);

/// Input-file error. Always carries a 1-based line and column; column 0 means
/// "whole line" and line 0 means "whole file" (I/O failures only).
class ParseError : public Error {
 public:
  ParseError(ParseErrorKind kind, std::string source, std::size_t line, std::size_t column,
             const std::string& detail);

  ParseErrorKind kind() const { return kind_; }
  const std::string& source() const { return source_; }
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  ParseErrorKind kind_;
  std::string source_;
  std::size_t line_;
  std::size_t column_;
};

/// Configuration-file violation; `key()` names the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& detail);
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

}  // namespace resofit
