#pragma once

#include <stdexcept>
#include <string>

namespace trafficview {

/// Base for every error raised by the library. Callers that only need to
/// report failures can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data, bad arguments, or violated preconditions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DuplicateIdError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

/// Collinear or coincident points handed to the homography solver.
class SingularConfigurationError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class DegenerateHomographyError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

class EmptyHarmonizationError : public Error {
 public:
  using Error::Error;
};

/// Text-generation endpoint failure. `attempt` is the zero-based request
/// index within the sweep or re-prompt loop that failed.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempt)
      : Error(what + " (attempt " + std::to_string(attempt) + ")"), attempt_(attempt) {}
  int attempt() const noexcept { return attempt_; }

 private:
  int attempt_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace trafficview
