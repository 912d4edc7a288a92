#pragma once

#include <stdexcept>
#include <string>

namespace medtransport {

/// Failure categories. The CLI maps each to a stable exit code.
enum class ErrorCategory { config, data, estimation };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& module, const std::string& what)
      : std::runtime_error(module + ": " + what), category_(category), module_(module) {}

  ErrorCategory category() const noexcept { return category_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorCategory category_;
  std::string module_;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& module, const std::string& what)
      : Error(ErrorCategory::config, module, what) {}
};

/// Schema and row-level validation failures on input data.
class DataError : public Error {
 public:
  DataError(const std::string& module, const std::string& what)
      : Error(ErrorCategory::data, module, what) {}
};

class EstimationError : public Error {
 public:
  EstimationError(const std::string& module, const std::string& what)
      : Error(ErrorCategory::estimation, module, what) {}
};

// Specific estimation failures that tests and callers distinguish.

class SeparationError : public EstimationError {
 public:
  explicit SeparationError(const std::string& what) : EstimationError("nuisance", what) {}
};

class SingularDesignError : public EstimationError {
 public:
  explicit SingularDesignError(const std::string& what) : EstimationError("nuisance", what) {}
};

class DegenerateDensityError : public EstimationError {
 public:
  explicit DegenerateDensityError(const std::string& what) : EstimationError("nuisance", what) {}
};

class PositivityError : public EstimationError {
 public:
  explicit PositivityError(const std::string& what) : EstimationError("tmle", what) {}
};

class StratumError : public EstimationError {
 public:
  StratumError(const std::string& module, const std::string& what) : EstimationError(module, what) {}
};

class CalibrationError : public EstimationError {
 public:
  explicit CalibrationError(const std::string& what) : EstimationError("dgp", what) {}
};

inline int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::data: return 3;
    case ErrorCategory::estimation: return 4;
  }
  return 1;
}

}  // namespace medtransport
