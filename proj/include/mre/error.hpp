#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mre {

// Every error carries the exit/status code it maps to at the C boundary:
// 2 usage/config, 3 data/format/domain, 4 numerical degeneracy.
class Error : public std::runtime_error {
 public:
  Error(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
  int code() const noexcept { return code_; }

 private:
  int code_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(2, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(2, what) {}
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what) : Error(3, what) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(3, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(3, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(3, what) {}
};

class DegenerateError : public Error {
 public:
  DegenerateError(const std::string& what, std::ptrdiff_t row = -1)
      : Error(4, what), row_(row) {}
  // Offending row of a distance matrix, or -1 when not row-specific.
  std::ptrdiff_t row() const noexcept { return row_; }

 private:
  std::ptrdiff_t row_;
};

}  // namespace mre
