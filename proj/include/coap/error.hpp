#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace coap {

enum class ErrorCode {
  DimensionMismatch,
  NonIntegerCount,
  NegativeCount,
  NonFiniteValue,
  NonPositiveOffset,
  MissingIntercept,
  RankDeficientCovariates,
  RankTooLarge,
  FactorCountTooLarge,
  InvalidConfig,
  Overflow,
  NonPositiveVariance,
  SingularGram,
  SingularCovariateGram,
  SingularSigmaTilde,
  NonFiniteElbo,
  EmptyMatrix,
  RankDeficientEstimate,
  DegenerateResidual,
  InvalidSpec,
  BracketFailure,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonIntegerCount: return "NonIntegerCount";
    case ErrorCode::NegativeCount: return "NegativeCount";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::NonPositiveOffset: return "NonPositiveOffset";
    case ErrorCode::MissingIntercept: return "MissingIntercept";
    case ErrorCode::RankDeficientCovariates: return "RankDeficientCovariates";
    case ErrorCode::RankTooLarge: return "RankTooLarge";
    case ErrorCode::FactorCountTooLarge: return "FactorCountTooLarge";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::NonPositiveVariance: return "NonPositiveVariance";
    case ErrorCode::SingularGram: return "SingularGram";
    case ErrorCode::SingularCovariateGram: return "SingularCovariateGram";
    case ErrorCode::SingularSigmaTilde: return "SingularSigmaTilde";
    case ErrorCode::NonFiniteElbo: return "NonFiniteElbo";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::RankDeficientEstimate: return "RankDeficientEstimate";
    case ErrorCode::DegenerateResidual: return "DegenerateResidual";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::BracketFailure: return "BracketFailure";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Numerical failures (as opposed to bad input) map to CLI exit code 3.
constexpr bool is_numerical(ErrorCode code) {
  switch (code) {
    case ErrorCode::Overflow:
    case ErrorCode::NonPositiveVariance:
    case ErrorCode::SingularGram:
    case ErrorCode::SingularCovariateGram:
    case ErrorCode::SingularSigmaTilde:
    case ErrorCode::NonFiniteElbo:
    case ErrorCode::RankDeficientEstimate:
    case ErrorCode::DegenerateResidual:
    case ErrorCode::BracketFailure:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace coap
