#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qag {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

// Raised by a generation backend. `index` is the position of the offending
// request within the submitted batch.
class BackendError : public Error {
 public:
  BackendError(std::size_t index, const std::string& what)
      : Error("request " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

}  // namespace qag
