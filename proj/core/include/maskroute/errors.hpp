#pragma once

#include <stdexcept>
#include <string>

namespace maskroute {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible for the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an API was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A mask does not fit the layer it is applied to.
class MaskError : public Error {
 public:
  using Error::Error;
};

class BudgetError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrorKind {
  kIo,
  kTruncated,
  kBadMagic,
  kBadVersion,
  kBadCrc,
  kBadPopcount,
  kBadPadding,
  kNonBinary,
  kMalformed,
};

const char* to_string(FormatErrorKind kind);

class FormatError : public Error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what)
      : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

class RegistryError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

/// Correlation requested on a vector with zero variance.
class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

class InsufficientPairsError : public Error {
 public:
  using Error::Error;
};

}  // namespace maskroute
