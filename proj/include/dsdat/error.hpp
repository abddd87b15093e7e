#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dsdat {

enum class ErrorCode {
  DimensionMismatch,
  InvalidArgument,
  RankDeficientB,
  RankDeficientC,
  WeightNotSPD,
  SingularShift,
  SingularKGamma,
  NearSingularPencil,
  MaxIterations,
  KernelCapExceeded,
  DegenerateProblem,
  KernelDegenerate,
  ConvergenceFailure,
  ImaginaryAxisEigenvalues,
  SingularW1,
  SingularMatrix,
  UnstableClosedLoop,
  ConditionsViolated,
  TraceMissing,
  InsufficientData,
  ParseError,
  IoError,
  CheckFailed,
};

inline std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::RankDeficientB: return "RankDeficient(B)";
    case ErrorCode::RankDeficientC: return "RankDeficient(C)";
    case ErrorCode::WeightNotSPD: return "WeightNotSPD";
    case ErrorCode::SingularShift: return "SingularShift";
    case ErrorCode::SingularKGamma: return "SingularKGamma";
    case ErrorCode::NearSingularPencil: return "NearSingularPencil";
    case ErrorCode::MaxIterations: return "MaxIterations";
    case ErrorCode::KernelCapExceeded: return "KernelCapExceeded";
    case ErrorCode::DegenerateProblem: return "DegenerateProblem";
    case ErrorCode::KernelDegenerate: return "KernelDegenerate";
    case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::ImaginaryAxisEigenvalues: return "ImaginaryAxisEigenvalues";
    case ErrorCode::SingularW1: return "SingularW1";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::UnstableClosedLoop: return "UnstableClosedLoop";
    case ErrorCode::ConditionsViolated: return "ConditionsViolated";
    case ErrorCode::TraceMissing: return "TraceMissing";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::CheckFailed: return "CheckFailed";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dsdat
