#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace chromacodec {

// Base of every error the library throws. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/plane shape disagreement. The message names the offending axis.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or API contract violation (e.g. backward on a non-scalar).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf appeared in a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed input data: files, payloads, curves.
class DataError : public Error {
 public:
  using Error::Error;
};

// Corrupt or truncated bitstream. Carries the frame index when known.
class DecodeError : public DataError {
 public:
  DecodeError(const std::string& what, std::ptrdiff_t frame_index = -1)
      : DataError(frame_index >= 0 ? "frame " + std::to_string(frame_index) + ": " + what : what),
        frame_index_(frame_index) {}

  std::ptrdiff_t frame_index() const { return frame_index_; }

 private:
  std::ptrdiff_t frame_index_;
};

}  // namespace chromacodec
