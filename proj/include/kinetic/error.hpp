#pragma once

#include <stdexcept>
#include <string>

namespace kinetic {

enum class ErrorCode {
  ZeroGradient,
  NotOnBoundary,
  ProjectionFailed,
  ZeroVelocity,
  NoExit,
  GrazingExit,
  GrazingAbort,
  SegmentLeavesDomain,
  IllConditioned,
  QuadratureUnderResolved,
  DiagonalSingularity,
  SingularGram,
  NonPositiveNorms,
  NonConvergence,
  NonContraction,
  RemainderTooLarge,
  ZeroDenominator,
  PreconditionViolated,
  ConfigInvalid,
  IoError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroGradient: return "ZeroGradient";
    case ErrorCode::NotOnBoundary: return "NotOnBoundary";
    case ErrorCode::ProjectionFailed: return "ProjectionFailed";
    case ErrorCode::ZeroVelocity: return "ZeroVelocity";
    case ErrorCode::NoExit: return "NoExit";
    case ErrorCode::GrazingExit: return "GrazingExit";
    case ErrorCode::GrazingAbort: return "GrazingAbort";
    case ErrorCode::SegmentLeavesDomain: return "SegmentLeavesDomain";
    case ErrorCode::IllConditioned: return "IllConditioned";
    case ErrorCode::QuadratureUnderResolved: return "QuadratureUnderResolved";
    case ErrorCode::DiagonalSingularity: return "DiagonalSingularity";
    case ErrorCode::SingularGram: return "SingularGram";
    case ErrorCode::NonPositiveNorms: return "NonPositiveNorms";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::NonContraction: return "NonContraction";
    case ErrorCode::RemainderTooLarge: return "RemainderTooLarge";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::PreconditionViolated: return "PreconditionViolated";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IoError: return "IoError";
  }
  return "UnknownError";
}

}  // namespace kinetic
