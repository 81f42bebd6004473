#pragma once

#include <stdexcept>
#include <string>

namespace dcfae {

// Each error kind maps onto a distinct failure class callers may want to
// tell apart (the CLI turns some of them into exit codes).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct FormatError : IoError { using IoError::IoError; };
struct LengthError : IoError { using IoError::IoError; };
struct ConsistencyError : IoError { using IoError::IoError; };
struct DecodeError : IoError { using IoError::IoError; };
struct EmptyDatasetError : IoError { using IoError::IoError; };
struct CheckpointMismatch : Error { using Error::Error; };

}  // namespace dcfae
