#pragma once

#include <stdexcept>
#include <string>

namespace mier {

/// Base of every error raised by the library. `code()` is a short
/// machine-parsable tag used by the CLI ("shape", "domain", "data", ...).
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error("shape", message) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& message) : Error("domain", message) {}
};

class GraphError : public Error {
 public:
  explicit GraphError(const std::string& message) : Error("graph", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config", message) {}
};

class DataError : public Error {
 public:
  DataError(std::string code, const std::string& message)
      : Error(std::move(code), message) {}
};

class NonFiniteLoss : public Error {
 public:
  explicit NonFiniteLoss(const std::string& message)
      : Error("non_finite_loss", message) {}
};

}  // namespace mier
