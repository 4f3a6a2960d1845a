#pragma once

#include <stdexcept>
#include <string>

namespace privdet {

// Bad command line, config file, or template directory. CLI exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or misaligned input data. CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The chat backend failed after retries, or returned a non-success status.
// CLI exit code 3.
class BackendError : public std::runtime_error {
 public:
  explicit BackendError(const std::string& what, int status = 0)
      : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

}  // namespace privdet
