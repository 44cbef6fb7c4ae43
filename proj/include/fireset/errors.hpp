#pragma once

#include <stdexcept>
#include <string>

namespace fireset {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric substrate
struct ShapeError : Error { using Error::Error; };
struct UnsupportedOp : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };

// Data and I/O
struct IoError : Error { using Error::Error; };
struct ManifestError : Error { using Error::Error; };
struct JitterRangeError : Error { using Error::Error; };
struct EmptyHorizon : Error { using Error::Error; };
struct RangeError : Error { using Error::Error; };
struct MixError : Error { using Error::Error; };

}  // namespace fireset
