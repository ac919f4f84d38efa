#pragma once

#include <stdexcept>
#include <string>

namespace adt {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or geometry mismatch in tensor ops or model wiring.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid configuration value.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input file; the message carries the byte offset of the failure.
struct FormatError : Error {
  using Error::Error;
};

// Non-finite loss or other numeric divergence during training.
struct NumericError : Error {
  using Error::Error;
};

// Filesystem failure.
struct IoError : Error {
  using Error::Error;
};

}  // namespace adt
