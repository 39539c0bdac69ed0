#pragma once

#include <stdexcept>
#include <string>

namespace epiforge {

/// Base for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values met during integration or training.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double at) : Error(what), at_(at) {}
  double at() const noexcept { return at_; }

 private:
  double at_;
};

/// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A required input file is missing or unreadable.
class FileError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace epiforge
