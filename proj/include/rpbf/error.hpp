#pragma once

#include <stdexcept>
#include <string>

namespace rpbf {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: singular or indefinite matrices, inconsistent calibration.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Problems with input files or their contents.
class DataError : public Error {
 public:
  enum class Code {
    missing_file,
    ragged_row,
    parse,
    too_few_groups,
    group_too_small,
    missing_column,
    unknown_label,
    duplicate_label,
    schema,
  };

  DataError(Code code, const std::string& what) : Error(what), code_(code) {}

  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

}  // namespace rpbf
