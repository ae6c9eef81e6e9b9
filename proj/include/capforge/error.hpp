#pragma once

#include <stdexcept>
#include <string>

namespace capforge {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input text that does not follow its declared grammar.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Matrices or vectors whose sizes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

// File ended before the declared content was complete.
class TruncatedError : public Error {
 public:
  using Error::Error;
};

// Stored tensor shape disagrees with the shape its dims imply.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Token id outside the vocabulary, or similar corrupt reference.
class CorruptInputError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Bad argument to an operation (violated precondition).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace capforge
