#pragma once

#include <stdexcept>
#include <string>

namespace invtrans {

// Error conditions raised by the library. Callers (and tests) dispatch on the
// code; messages carry context such as task ids or sizes and are not stable.
enum class Errc {
  DimensionMismatch,
  NonFiniteValue,
  DuplicateTaskId,
  TaskTooSmall,
  NoLabeledData,
  UnlabeledTask,
  RankDeficient,
  InvalidK,
  TooFewSamples,
  SingleTask,
  InvalidBandwidth,
  EnumerationTooLarge,
  TestTaskTooSmall,
  NoTestTask,
  NotPositiveDefinite,
  SingularM,
  DegenerateDenominator,
  InfeasibleConstraints,
  ParseError,
  InconsistentWidth,
  InvalidConfig,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::DuplicateTaskId: return "DuplicateTaskId";
    case Errc::TaskTooSmall: return "TaskTooSmall";
    case Errc::NoLabeledData: return "NoLabeledData";
    case Errc::UnlabeledTask: return "UnlabeledTask";
    case Errc::RankDeficient: return "RankDeficient";
    case Errc::InvalidK: return "InvalidK";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::SingleTask: return "SingleTask";
    case Errc::InvalidBandwidth: return "InvalidBandwidth";
    case Errc::EnumerationTooLarge: return "EnumerationTooLarge";
    case Errc::TestTaskTooSmall: return "TestTaskTooSmall";
    case Errc::NoTestTask: return "NoTestTask";
    case Errc::NotPositiveDefinite: return "NotPositiveDefinite";
    case Errc::SingularM: return "SingularM";
    case Errc::DegenerateDenominator: return "DegenerateDenominator";
    case Errc::InfeasibleConstraints: return "InfeasibleConstraints";
    case Errc::ParseError: return "ParseError";
    case Errc::InconsistentWidth: return "InconsistentWidth";
    case Errc::InvalidConfig: return "InvalidConfig";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace invtrans
