#pragma once

#include <stdexcept>
#include <string>

namespace factorlens {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class KeyError : public Error {
 public:
  using Error::Error;
};

class ParamError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DegenerateError : public Error {
 public:
  using Error::Error;
};

class MetaError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised when a container file is malformed. field() names the part of the
// file that failed validation ("magic", "version", "manifest", "dim", ...).
class FormatError : public Error {
 public:
  FormatError(std::string field, const std::string& detail)
      : Error("format error in '" + field + "': " + detail),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace factorlens
