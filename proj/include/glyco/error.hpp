#pragma once

#include <stdexcept>
#include <string>

namespace glyco {

enum class ErrorKind {
  MissingColumn,
  BadRowCount,
  NonNumericCell,
  NegativeCovariate,
  NonFiniteState,
  NumericalBlowup,
  InvalidSpec,
  OutOfInterval,
  NonFinite,
  DegenerateRecord,
  AllMissing,
  DegenerateInput,
  LengthMismatch,
  MissingLabel,
  InvalidConfig,
  Io,
  DuplicateId,
  BadCategory,
  InconsistentRecord,
};

const char* to_string(ErrorKind kind);

/// Every failure raised by the library carries one of the ErrorKind tags so
/// callers (and the CLI's exit-code mapping) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace glyco
