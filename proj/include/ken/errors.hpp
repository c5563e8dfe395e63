#pragma once

#include <stdexcept>
#include <string>

namespace ken {

// Base for every error thrown by the library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor rank/shape violations (mismatched matmul operands, bad concat widths, ...).
struct ShapeError : Error {
  using Error::Error;
};

// Invalid hyperparameters or malformed config files.
struct ConfigError : Error {
  using Error::Error;
};

// A forward op produced NaN/Inf, or a non-finite value reached a loss.
struct NumericError : Error {
  using Error::Error;
};

// Dataset/bundle validation failures. `kind` lets tests distinguish the cases.
struct DataError : Error {
  enum class Kind {
    missing_file,
    bad_magic,
    shape_mismatch,
    byte_length,
    non_finite,
    zero_norm_clip,
    bad_label,
    bad_manifest,
  };

  DataError(Kind k, const std::string& msg) : Error(msg), kind(k) {}

  Kind kind;
};

// Filesystem failures outside dataset validation (history files, exports, ...).
struct IoError : Error {
  using Error::Error;
};

}  // namespace ken
