#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace perspectra {

enum class ErrorCode {
  // corpus
  MalformedRecord,
  DanglingReference,
  LabelOutOfRange,
  WrongLabelSpace,
  EmptyCommentSet,
  MismatchedCorpora,
  // disagreement
  EmptyAnnotationSet,
  DegenerateLabelSpace,
  // splitter
  InfeasibleSplit,
  BadFractions,
  // diagnostic / residual
  EncoderFailure,
  UnknownCategory,
  TrainingDiverged,
  InvalidDistribution,
  StateNotFrozen,
  // regimes
  DegenerateVariance,
  RankDeficient,
  InsufficientData,
  // eval
  SingleClass,
  EmptyInput,
  NoDisagreedComments,
  // synth
  SpecInfeasible,
  // cli / config
  UnknownCommand,
  BadFlag,
  UnknownPreset,
  BadConfig,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

// All toolkit failures are reported through this exception; callers branch
// on code() rather than on the message text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace perspectra
