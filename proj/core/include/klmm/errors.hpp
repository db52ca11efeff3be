#pragma once

#include <stdexcept>
#include <string>

namespace klmm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A genotype column with zero variance; the caller should drop or
/// regenerate that SNP before standardizing.
class MonomorphicColumnError : public Error {
 public:
  explicit MonomorphicColumnError(long column)
      : Error("monomorphic genotype column " + std::to_string(column)),
        column_(column) {}
  long column() const { return column_; }

 private:
  long column_;
};

class EmptyKernelError : public Error {
 public:
  using Error::Error;
};

/// Leave-one-out covariance is numerically singular for this SNP.
class SingularDowndateError : public Error {
 public:
  using Error::Error;
};

class SingularDesignError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class MissingTruthError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace klmm
