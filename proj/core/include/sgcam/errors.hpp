#pragma once

#include <stdexcept>
#include <string>

namespace sgcam {

// Every failure raised by the library derives from Error so callers can
// catch the whole family at one point (the CLI maps it to exit code 2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or layer dimensions that do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A caller-supplied parameter outside its legal range.
class ParamError : public Error {
 public:
  using Error::Error;
};

// Malformed file content (PPM header, model manifest).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Weight blob size does not match the manifest.
class LengthError : public Error {
 public:
  using Error::Error;
};

class UnknownLayer : public Error {
 public:
  using Error::Error;
};

class NonConvLayer : public Error {
 public:
  using Error::Error;
};

// Requested combination is well formed but deliberately not implemented.
class Unsupported : public Error {
 public:
  using Error::Error;
};

}  // namespace sgcam
