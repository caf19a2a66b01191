#pragma once

#include <stdexcept>
#include <string>

namespace cdpm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration values. CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class OutOfWorkspaceError : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver failed to converge.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// No non-negative tension set balances the requested wrench.
class WrenchInfeasibleError : public Error {
 public:
  using Error::Error;
};

class SensorFaultError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// Calibration scenarios that were meant to be contact-free produced contact.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

/// The scan controller refused to continue (force guard, workspace, stuck retreat).
class AbortError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdpm
