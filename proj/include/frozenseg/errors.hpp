#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace frozenseg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or an invalid numeric argument.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the autodiff tape (foreign node, non-scalar loss, bad ordering).
class GraphError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Missing or inconsistent input data (fixtures, manifests, GT documents).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary file. Carries the byte offset where decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int iteration)
      : Error(what + " at iteration " + std::to_string(iteration)), iteration_(iteration) {}

  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

}  // namespace frozenseg
