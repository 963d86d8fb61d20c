#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sapa {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text. line() is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input that violates a data-model invariant.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Not enough eligible data to build the requested structure.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced during a numeric computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// An upstream artifact a pipeline stage depends on is absent.
class MissingArtifactError : public Error {
 public:
  explicit MissingArtifactError(const std::string& path)
      : Error("missing artifact: " + path), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace sapa
