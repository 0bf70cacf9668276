#pragma once

#include <stdexcept>
#include <string>

namespace crossfuse {

/// Failure classes. The numeric values double as CLI exit codes.
enum class ErrorKind : int {
  Usage = 1,
  Config = 2,
  Data = 3,
  Numerical = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& what)
      : Error(ErrorKind::Numerical, what) {}
};

/// Shape disagreement between operands.
struct DimensionError : Error {
  explicit DimensionError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

/// Stage 2 requested before stage-1 products exist.
struct OrderingError : Error {
  explicit OrderingError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

struct VersionMismatch : Error {
  explicit VersionMismatch(const std::string& what) : Error(ErrorKind::Data, what) {}
};

struct ChecksumError : Error {
  explicit ChecksumError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

}  // namespace crossfuse
