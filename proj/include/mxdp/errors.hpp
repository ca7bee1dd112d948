#pragma once

#include <stdexcept>
#include <string>

namespace mxdp {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A block carries the reserved NaN scale code or is otherwise malformed.
class InvalidBlockError : public Error {
 public:
  using Error::Error;
};

// Matrix shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A saturated accumulator reached a stage that cannot represent it.
class SaturationError : public Error {
 public:
  using Error::Error;
};

// File or stream level failure (missing file, bad magic, truncation).
class IoError : public Error {
 public:
  using Error::Error;
};

// An operand element is not usable in the selected mode (e.g. E5M2 Inf/NaN).
class InvalidOperandError : public Error {
 public:
  InvalidOperandError(char operand, int index, const std::string& what)
      : Error(what), operand_(operand), index_(index) {}
  char operand() const { return operand_; }
  int index() const { return index_; }

 private:
  char operand_;
  int index_;
};

}  // namespace mxdp
