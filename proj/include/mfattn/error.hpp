#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace mfattn {

/// Base error carrying the module and operation where it was raised, so the
/// CLI can surface failures as machine-readable JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string module, std::string op, const std::string& message)
      : std::runtime_error(module + "." + op + ": " + message),
        module_(std::move(module)),
        op_(std::move(op)) {}

  const std::string& module() const noexcept { return module_; }
  const std::string& op() const noexcept { return op_; }

 private:
  std::string module_;
  std::string op_;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Raised when a vector with norm <= eps_norm would be radially projected.
/// In practice this only fires on programming errors, never on a sane
/// projected-Euler step.
class NearZeroVector : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& message, int line = 0, int col = 0)
      : Error("cli_io", "parse_config", message), line_(line), col_(col) {}

  int line() const noexcept { return line_; }
  int col() const noexcept { return col_; }

 private:
  int line_;
  int col_;
};

}  // namespace mfattn
