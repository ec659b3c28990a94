#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace nmfsem {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

class DomainError : public Error {
public:
  using Error::Error;
};

// rho(A) >= 1 or (I - A) singular.
class InstabilityError : public Error {
public:
  using Error::Error;
};

class NonConvergenceError : public Error {
public:
  NonConvergenceError(const std::string& what, Eigen::MatrixXd partial)
      : Error(what), partial_(std::move(partial)) {}

  const Eigen::MatrixXd& partial() const noexcept { return partial_; }

private:
  Eigen::MatrixXd partial_;
};

class DegenerateError : public Error {
public:
  using Error::Error;
};

class NumericalFailure : public Error {
public:
  NumericalFailure(const std::string& what, std::size_t iteration)
      : Error(what), iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

private:
  std::size_t iteration_;
};

class InsufficientReplicates : public Error {
public:
  using Error::Error;
};

class NoFeasibleModel : public Error {
public:
  using Error::Error;
};

// Malformed or unusable user input (CSV cells, spec files, artifacts).
class InputError : public Error {
public:
  using Error::Error;
};

class SchemaError : public InputError {
public:
  using InputError::InputError;
};

}  // namespace nmfsem
