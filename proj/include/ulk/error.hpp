#pragma once

#include <stdexcept>
#include <string>

namespace ulk {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or element counts do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An operator or architecture configuration violates its constraints.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A ULKW file could not be decoded.
class FormatError : public Error {
 public:
  enum class Kind { kBadMagic, kUnsupportedVersion, kTruncated, kShapeMismatch, kMalformed, kIo };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace ulk
