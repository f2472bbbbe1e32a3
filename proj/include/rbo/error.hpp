#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rbo {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or parameter combination. The CLI maps this to exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or unusable input data. The CLI maps this to exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

// SMILES syntax error; `offset` is the byte offset into the source string.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : DataError(what + " at offset " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Numerical failure during training or inference (non-finite loss, Cholesky breakdown).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace rbo
