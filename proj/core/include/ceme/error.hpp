#pragma once

#include <stdexcept>
#include <string>

namespace ceme {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched vector/matrix dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared in a log-density, bound or gradient.
/// `term()` names the offending quantity and `index()` the sample, if any.
class NumericalError : public Error {
 public:
  NumericalError(std::string term, long index, const std::string& what)
      : Error(what), term_(std::move(term)), index_(index) {}

  const std::string& term() const noexcept { return term_; }
  long index() const noexcept { return index_; }

 private:
  std::string term_;
  long index_;
};

/// Synthetic data generation failed (e.g. Cholesky never succeeded).
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File missing, unreadable or malformed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ceme
