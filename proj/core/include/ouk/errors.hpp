#pragma once

#include <stdexcept>
#include <string>

namespace ouk {

// Failure categories surfaced by the library.  Every throwing operation
// documents which of these it can raise.
enum class ErrorCode {
  DimensionMismatch,
  NotHurwitz,
  NotSPD,
  Overflow,
  NonConvergence,
  ZeroPoint,
  BracketFailure,
  DiagonalPoint,
  OutOfRegime,
  OutOfDomain,
  CoverageFailure,
  SignAmbiguity,
  BudgetTooSmall,
  DefectiveStructureTolerance,
  DomainError,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotHurwitz: return "NotHurwitz";
    case ErrorCode::NotSPD: return "NotSPD";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::ZeroPoint: return "ZeroPoint";
    case ErrorCode::BracketFailure: return "BracketFailure";
    case ErrorCode::DiagonalPoint: return "DiagonalPoint";
    case ErrorCode::OutOfRegime: return "OutOfRegime";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::CoverageFailure: return "CoverageFailure";
    case ErrorCode::SignAmbiguity: return "SignAmbiguity";
    case ErrorCode::BudgetTooSmall: return "BudgetTooSmall";
    case ErrorCode::DefectiveStructureTolerance: return "DefectiveStructureTolerance";
    case ErrorCode::DomainError: return "DomainError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace ouk
