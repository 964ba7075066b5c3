#pragma once

#include <stdexcept>
#include <string>

namespace qda {

// Base of every error the library throws. Callers that only need a message
// can catch std::runtime_error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid parameters or missing configuration resources (data files, paths).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (files, records, matrices).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace qda
