#pragma once

#include <stdexcept>
#include <string>

namespace minkloc {

// Base of every error raised by the library. CLI exit codes are derived from
// the concrete type (see tools/minkloc.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class StrideError : public Error {
 public:
  using Error::Error;
};

class TapeConsumed : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class KeyError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace minkloc
