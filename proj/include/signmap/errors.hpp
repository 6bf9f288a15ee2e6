#pragma once

#include <stdexcept>
#include <string>

namespace signmap {

// Base class for every error raised by the library. Callers that only need a
// message catch this; callers that branch on the failure kind catch the
// concrete subclasses below.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class NonConvergence : public Error {
 public:
  using Error::Error;
};

class BehindCamera : public Error {
 public:
  using Error::Error;
};

class InvalidPerturbation : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

class DegenerateRays : public Error {
 public:
  using Error::Error;
};

class NoTurns : public Error {
 public:
  using Error::Error;
};

class NoMatches : public Error {
 public:
  using Error::Error;
};

class EmptyScene : public Error {
 public:
  using Error::Error;
};

// Malformed input file. The message carries "file:line: what".
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Input files disagree on which frames exist.
class FrameMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace signmap
