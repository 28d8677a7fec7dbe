#pragma once

#include <stdexcept>
#include <string>

namespace sblkit {

/// Base class for all sblkit errors.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or precondition violation (bad rho, bad dimensions, ...).
class DomainError : public Error {
public:
  using Error::Error;
};

/// Shape mismatch between two objects that must agree.
class DimensionError : public DomainError {
public:
  using DomainError::DomainError;
};

/// A numerical operation failed: singular solve, non-finite intermediate,
/// denominator collapse. Carries the iteration index when known.
class NumericalError : public Error {
public:
  NumericalError(const std::string& what, int iteration = -1)
      : Error(iteration >= 0 ? what + " (iteration " + std::to_string(iteration) + ")"
                             : what),
        iteration_(iteration) {}

  int iteration() const noexcept { return iteration_; }

private:
  int iteration_;
};

/// An object was used in a state it must not be in (e.g. an incomplete tape).
class StateError : public Error {
public:
  using Error::Error;
};

/// Malformed file: bad magic, wrong version, truncated payload.
class FormatError : public Error {
public:
  using Error::Error;
};

/// Filesystem failure, reported with the offending path.
class IoError : public Error {
public:
  using Error::Error;
};

/// Training diverged (non-finite loss); carries epoch/batch indices.
class TrainingError : public Error {
public:
  TrainingError(const std::string& what, int epoch, int batch)
      : Error(what + " (epoch " + std::to_string(epoch) + ", batch " +
              std::to_string(batch) + ")"),
        epoch_(epoch), batch_(batch) {}

  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }

private:
  int epoch_;
  int batch_;
};

}  // namespace sblkit
