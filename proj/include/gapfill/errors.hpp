#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gapfill {

// Base for every error raised by the library. The CLI maps subclasses to
// exit codes (see tools/gapfill_cli.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Bad argument values (ranges, menus, invalid configuration).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A precondition on the call sequence was violated (e.g. stale record).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Model and data disagree (architecture, normalizer, variable).
class MismatchError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace gapfill
