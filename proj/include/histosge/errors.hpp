#pragma once

#include <stdexcept>
#include <string>

namespace histosge {

/// Base of every error raised by the library. The CLI maps subclasses onto
/// exit codes (2 usage/validation, 3 numerical, 4 incompatibility).
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};
class AlignmentError : public Error {
 public:
  using Error::Error;
};
class ValidationError : public Error {
 public:
  using Error::Error;
};
class ParameterError : public Error {
 public:
  using Error::Error;
};
class BoundsError : public Error {
 public:
  using Error::Error;
};
class DegenerateError : public Error {
 public:
  using Error::Error;
};
class ContractError : public Error {
 public:
  using Error::Error;
};
class EncodingError : public Error {
 public:
  using Error::Error;
};
class EvaluationError : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};

class ExtractorBackendError : public Error {
 public:
  using Error::Error;
};
class IncompatibilityError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
public:
  DivergenceError(const std::string& what, std::string last_checkpoint)
      : Error(what), last_checkpoint_(std::move(last_checkpoint)) {}
  const std::string& last_checkpoint() const { return last_checkpoint_; }

private:
  std::string last_checkpoint_;
};

}  // namespace histosge
