#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace asap {

// Base for every error raised by the library. Callers that only care about
// "something went wrong in the lab" catch this; the subclasses carry the kind.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or range violations: dimension mismatch, out-of-range timestep, ...
class StructuralError : public Error {
 public:
  using Error::Error;
};

class SingularityError : public Error {
 public:
  using Error::Error;
};

// Inputs that are well-formed but leave the operation undefined
// (zero-norm vector, all-zero sample weights).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed binary input; offset is the byte position where decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace asap
