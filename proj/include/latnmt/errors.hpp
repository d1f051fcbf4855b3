// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace latnmt {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Problems with user-supplied data or files. The CLI maps these to exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Violated internal contracts (shape mismatches, misuse of the API).
/// The CLI maps these to exit code 3.
class InternalError : public Error {
 public:
  using Error::Error;
};

class MismatchError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyInputError : public DataError {
 public:
  using DataError::DataError;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& reason)
      : DataError("line " + std::to_string(line) + ": " + reason), line_(line), reason_(reason) {}
  std::size_t line() const { return line_; }
  const std::string& reason() const { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};

class InvalidLatticeError : public DataError {
 public:
  using DataError::DataError;
};

class TopologyError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class FormatError : public DataError {
 public:
  FormatError(std::size_t offset, const std::string& reason)
      : DataError("byte offset " + std::to_string(offset) + ": " + reason), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class VersionError : public DataError {
 public:
  using DataError::DataError;
};

class FingerprintError : public DataError {
 public:
  using DataError::DataError;
};

class SpecError : public DataError {
 public:
  using DataError::DataError;
};

class LengthMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyCorpusError : public DataError {
 public:
  using DataError::DataError;
};

class DimensionError : public InternalError {
 public:
  using InternalError::InternalError;
};

class ShapeError : public InternalError {
 public:
  using InternalError::InternalError;
};

class StateError : public InternalError {
 public:
  using InternalError::InternalError;
};

}  // namespace latnmt
