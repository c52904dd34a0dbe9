#pragma once

#include <stdexcept>
#include <string>

namespace pnc {

// Base for all toolkit failures. Precondition violations on library calls
// use std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (files, annotations, datasets).
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or divergence during a numeric computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace pnc
