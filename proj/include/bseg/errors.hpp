#pragma once

#include <stdexcept>
#include <string>

namespace bseg {

/// Base class for all bseg errors. Runtime failures map to CLI exit code 3.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid user input (bad config, bad file content, violated precondition).
/// Maps to CLI exit code 2.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

class ShapeMismatchError : public ValidationError {
 public:
  explicit ShapeMismatchError(const std::string& msg) : ValidationError(msg) {}
};

class NonBinaryLabelError : public ValidationError {
 public:
  explicit NonBinaryLabelError(const std::string& msg) : ValidationError(msg) {}
};

class InvalidKernelError : public ValidationError {
 public:
  explicit InvalidKernelError(const std::string& msg) : ValidationError(msg) {}
};

class IncompatibleShapeError : public ValidationError {
 public:
  explicit IncompatibleShapeError(const std::string& msg) : ValidationError(msg) {}
};

class ConfigError : public ValidationError {
 public:
  explicit ConfigError(const std::string& msg) : ValidationError(msg) {}
};

class ParseError : public ValidationError {
 public:
  explicit ParseError(const std::string& msg) : ValidationError(msg) {}
};

/// Surface metrics are undefined on empty masks; the caller decides the
/// sentinel policy.
class EmptyMaskError : public Error {
 public:
  explicit EmptyMaskError(const std::string& msg) : Error(msg) {}
};

class MissingLabelError : public Error {
 public:
  explicit MissingLabelError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace bseg
