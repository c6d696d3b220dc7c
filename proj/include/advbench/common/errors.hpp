#pragma once

#include <stdexcept>
#include <string>

namespace advbench {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem / codec failures.
struct IoError : Error {
  using Error::Error;
};

// Structured text that does not parse.
struct ParseError : Error {
  using Error::Error;
};

// Inputs that parse but violate a documented precondition or invariant.
struct ValidationError : Error {
  using Error::Error;
};

// An operation the selected model cannot perform (e.g. language detection
// on an English-only checkpoint).
struct CapabilityError : Error {
  using Error::Error;
};

// Non-finite values encountered mid-computation.
struct NumericalError : Error {
  using Error::Error;
};

}  // namespace advbench
