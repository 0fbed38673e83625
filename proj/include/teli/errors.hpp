#pragma once

#include <stdexcept>
#include <string>

namespace teli {

// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes disagree with an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A kernel produced (or was asked to produce) a non-finite value,
// or training diverged.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Anything wrong with on-disk inputs: dataset layout, images, checkpoints.
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values; maps to the usage exit code.
class UsageError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

class CheckpointCorrupt : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointVersionMismatch : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointSpecMismatch : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

}  // namespace teli
