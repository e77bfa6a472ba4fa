#pragma once

#include <stdexcept>
#include <string>

namespace postfault {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A fault scenario cannot be simulated on the given network.
class ScenarioRejected : public Error {
 public:
  using Error::Error;
};

/// The swing dynamics blew up or lost synchronism.
class SimulationDiverged : public Error {
 public:
  SimulationDiverged(const std::string& what, std::string scenario)
      : Error(what + " [" + scenario + "]"), scenario_(std::move(scenario)) {}
  const std::string& scenario() const noexcept { return scenario_; }

 private:
  std::string scenario_;
};

/// Malformed or inconsistent input data (trajectories, files).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Gradient training failed; carries the offending parameter when known.
class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what, std::string parameter = {})
      : Error(what), parameter_(std::move(parameter)) {}
  const std::string& parameter() const noexcept { return parameter_; }

 private:
  std::string parameter_;
};

/// The SGHMC chain produced a non-finite state.
class SamplerError : public Error {
 public:
  SamplerError(const std::string& what, std::size_t iteration)
      : Error(what + " at outer iteration " + std::to_string(iteration)),
        iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace postfault
