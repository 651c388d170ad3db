#pragma once

#include <stdexcept>
#include <string>

namespace qla {

// Error hierarchy shared by every module. Callers that only care about
// "something went wrong" can catch std::runtime_error / std::logic_error.

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A dense fallback was requested for a problem larger than the configured cap.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// A factorization that must succeed did not (non-PD core matrix, etc.).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int epoch, const std::string& what)
      : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t row, std::size_t column, const std::string& what)
      : std::runtime_error(what), row_(row), column_(column) {}
  std::size_t row() const { return row_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyDatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qla
