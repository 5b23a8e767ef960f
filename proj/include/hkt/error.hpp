#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hkt {

// Root of every error the library throws. Subclasses map onto the failure
// categories callers need to tell apart (the CLI turns them into exit codes).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A softmax row with every entry masked out.
class DegenerateRowError : public Error {
 public:
  DegenerateRowError(std::size_t row)
      : Error("softmax row " + std::to_string(row) + " is fully masked"),
        row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

class DegenerateError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class SingularityError : public Error {
 public:
  using Error::Error;
};

class GraphError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " at token " + std::to_string(position)),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace hkt
