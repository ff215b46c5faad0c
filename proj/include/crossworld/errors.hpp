#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace crossworld {

// Bad data: empty sets, non-finite values, malformed files.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad parameters: levels out of range, undersized calibration sets, etc.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of a function.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A diagnostic could not be computed from the available rows.
class DiagnosticError : public InputError {
 public:
  DiagnosticError(const std::string& what, std::size_t count)
      : InputError(what), count_(count) {}
  std::size_t count() const noexcept { return count_; }

 private:
  std::size_t count_;
};

}  // namespace crossworld
