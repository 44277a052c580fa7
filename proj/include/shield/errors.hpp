#pragma once

#include <stdexcept>
#include <string>

namespace shield {

// Root of every error the engine raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside an operation's domain (non-binary label, empty input, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. backward() from a non-scalar node.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Bad configuration: malformed JSON, invalid flag values, ablation mismatch.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad input data: unlabeled samples in training, invalid dumps, missing files.
class DataError : public Error {
 public:
  using Error::Error;
};

// Binary container with the wrong magic or an unsupported version.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// Binary container whose payload ends early or carries trailing bytes.
class LengthError : public DataError {
 public:
  using DataError::DataError;
};

// Header and payload disagree (dims, range bounds, JSON field types).
class ConsistencyError : public DataError {
 public:
  using DataError::DataError;
};

// A decoded or constructed dump violates one of its invariants.
class InvalidDumpError : public DataError {
 public:
  using DataError::DataError;
};

// A metric is undefined for the given input (e.g. AUC with one class).
class UndefinedMetricError : public DomainError {
 public:
  using DomainError::DomainError;
};

}  // namespace shield
