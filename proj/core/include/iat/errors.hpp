#pragma once

#include <stdexcept>
#include <string>

namespace iat {

// Base class for every error the library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rank or dimension disagreement between operands.
struct ShapeError : Error {
  using Error::Error;
};

// Non-finite values, invalid probability rows, out-of-range labels.
struct ValueError : Error {
  using Error::Error;
};

// Malformed or unreadable files (checkpoints, IDX datasets). The kind tells
// callers apart without string matching.
struct IoError : Error {
  enum class Kind {
    kBadMagic,
    kTruncated,
    kShapeMismatch,
    kCountMismatch,
    kBadDescriptor,
    kUnreadable,
  };
  IoError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
  Kind kind;
};

// Bad run configuration: unknown key, unparsable value, invalid combination.
struct ConfigError : Error {
  using Error::Error;
};

// Training produced a non-finite loss or parameter update.
struct DivergenceError : Error {
  using Error::Error;
};

}  // namespace iat
