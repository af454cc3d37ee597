#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace comfree {

//! Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

//! A state, input, or intermediate quantity became NaN or infinite.
class NonFiniteState : public Error {
 public:
  explicit NonFiniteState(const std::string& what, long env = -1)
      : Error(env >= 0 ? what + " (env " + std::to_string(env) + ")" : what), env_(env) {}

  //! Offending environment index, or -1 when not attributable.
  long env() const noexcept { return env_; }

 private:
  long env_;
};

class SingularInertia : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& reason)
      : Error("parse error at line " + std::to_string(line) + ": " + reason),
        line_(line),
        reason_(reason) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};

class ValidationError : public Error {
 public:
  ValidationError(const std::string& field, const std::string& reason)
      : Error("invalid " + field + ": " + reason), field_(field), reason_(reason) {}

  const std::string& field() const noexcept { return field_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string field_;
  std::string reason_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UnsupportedPair : public Error {
 public:
  using Error::Error;
};

class InternalError : public Error {
 public:
  using Error::Error;
};

//! Every MPPI sample produced a non-finite cost.
class PlanFailure : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& reason)
      : Error(path + ": " + reason), path_(path) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace comfree
