#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hpt {

/// Base of every error raised by the library. `kind()` is the stable
/// machine-readable tag the CLI puts into its error JSON.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "dimension_error"; }
};

class InputError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "input_error"; }
};

class ContractError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "contract_violation"; }
};

class OptimizationError : public Error {
 public:
  OptimizationError(const std::string& what, std::string trace)
      : Error(what), trace_(std::move(trace)) {}
  const char* kind() const noexcept override { return "optimization_error"; }
  const std::string& trace() const noexcept { return trace_; }

 private:
  std::string trace_;
};

class FormatError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "format_error"; }
};

/// Bad configuration; `issues()` lists each offending key with its reason.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what, std::vector<std::string> issues = {})
      : Error(what), issues_(std::move(issues)) {}
  const char* kind() const noexcept override { return "validation_error"; }
  const std::vector<std::string>& issues() const noexcept { return issues_; }

 private:
  std::vector<std::string> issues_;
};

}  // namespace hpt
