#include "glyco/error.hpp"

namespace glyco {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::BadRowCount: return "BadRowCount";
    case ErrorKind::NonNumericCell: return "NonNumericCell";
    case ErrorKind::NegativeCovariate: return "NegativeCovariate";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::NumericalBlowup: return "NumericalBlowup";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::OutOfInterval: return "OutOfInterval";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::DegenerateRecord: return "DegenerateRecord";
    case ErrorKind::AllMissing: return "AllMissing";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::MissingLabel: return "MissingLabel";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Io: return "Io";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::BadCategory: return "BadCategory";
    case ErrorKind::InconsistentRecord: return "InconsistentRecord";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

}  // namespace glyco
