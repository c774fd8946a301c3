#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace kpf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inputs whose shapes do not agree (structural, not a modelling problem).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File-system or parse failure on external data.
class IoError : public Error {
 public:
  using Error::Error;
};

/// The requested operation does not apply to this model regime.
class UnsupportedRegime : public Error {
 public:
  using Error::Error;
};

/// Numerical failure. Carries the filter step when one is known.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what, std::optional<std::size_t> step = std::nullopt)
      : Error(step ? what + " (step " + std::to_string(*step) + ")" : what), step_(step) {}

  std::optional<std::size_t> step() const { return step_; }

 private:
  std::optional<std::size_t> step_;
};

/// Taylor coefficients of the Riccati solution exceeded the blow-up guard.
class RiccatiBlowUp : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Innovation covariance too ill-conditioned to factor.
class DegenerateObservation : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Every particle carries zero likelihood.
class WeightDegeneracy : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace kpf
