#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace implicit_motion {

enum class ErrorKind {
  Syntax,
  UnknownVariable,
  Arity,
  Domain,
  NonSmoothPoint,
  SingularB,
  SignFlip,
  LemmaViolation,
  NoConvergence,
  TangencyViolation,
  StepUnderflow,
  IntegrationFailure,
  DegenerateZero,
  NotAdmissible,
  QuadratureNotConverged,
  SingularShootJacobian,
  BudgetExceeded,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library. `offset()` is the byte offset into
// the parsed source for parser errors and npos otherwise.
class Error : public std::runtime_error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  Error(ErrorKind kind, const std::string& message, std::size_t offset = npos)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        offset_(offset) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  ErrorKind kind_;
  std::size_t offset_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Syntax: return "SyntaxError";
    case ErrorKind::UnknownVariable: return "UnknownVariable";
    case ErrorKind::Arity: return "ArityError";
    case ErrorKind::Domain: return "DomainError";
    case ErrorKind::NonSmoothPoint: return "NonSmoothPoint";
    case ErrorKind::SingularB: return "SingularB";
    case ErrorKind::SignFlip: return "SignFlip";
    case ErrorKind::LemmaViolation: return "LemmaViolation";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::TangencyViolation: return "TangencyViolation";
    case ErrorKind::StepUnderflow: return "StepUnderflow";
    case ErrorKind::IntegrationFailure: return "IntegrationFailure";
    case ErrorKind::DegenerateZero: return "DegenerateZero";
    case ErrorKind::NotAdmissible: return "NotAdmissible";
    case ErrorKind::QuadratureNotConverged: return "QuadratureNotConverged";
    case ErrorKind::SingularShootJacobian: return "SingularShootJacobian";
    case ErrorKind::BudgetExceeded: return "BudgetExceeded";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Error";
}

}  // namespace implicit_motion
