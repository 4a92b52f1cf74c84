#pragma once

#include <stdexcept>
#include <string>

namespace synloc {

enum class ErrorKind { config, data, numeric };

/// Base of every error the toolkit throws. The kind maps onto the CLI exit
/// code (config 2, data 3, numeric 4).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  int exit_code() const noexcept {
    switch (kind_) {
      case ErrorKind::config: return 2;
      case ErrorKind::data: return 3;
      case ErrorKind::numeric: return 4;
    }
    return 1;
  }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

}  // namespace synloc
