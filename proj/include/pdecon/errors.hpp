#pragma once

#include <stdexcept>
#include <string>

namespace pdecon {

/// Raised when a caller violates a precondition (bad sizes, mismatched orders,
/// unknown names). The CLI maps it to exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical procedure fails to produce a result, e.g. both root
/// finders diverge. The CLI maps it to exit code 1.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pdecon
