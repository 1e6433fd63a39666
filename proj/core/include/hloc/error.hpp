#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hloc {

// Base of every error the library throws. `kind()` is a short stable tag the
// CLI prints so failures are machine-parsable.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

// Malformed file contents. `line` is 1-based for text formats, 0 otherwise.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error("parse", line ? "line " + std::to_string(line) + ": " + what
                            : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// A value violates a documented invariant (shape, ordering, range).
class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& what) : Error("invariant", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

}  // namespace hloc
