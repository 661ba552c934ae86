#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

// Error taxonomy used across the library. Callers that can recover catch the
// specific type; everything derives from Error for blanket handling.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration (shapes, incompatible options, infeasible
// partition requests).
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input bytes (IDX / CIFAR binary files, config text).
struct ParseError : Error {
  using Error::Error;
};

// Non-finite values encountered during numeric work.
struct NumericalError : Error {
  using Error::Error;
};

// API misuse: out-of-range ids, empty inputs, missing forward context.
struct UsageError : Error {
  using Error::Error;
};

}  // namespace fedsim
