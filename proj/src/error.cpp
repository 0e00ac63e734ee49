#include "perspectra/error.hpp"

namespace perspectra {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::WrongLabelSpace: return "WrongLabelSpace";
    case ErrorCode::EmptyCommentSet: return "EmptyCommentSet";
    case ErrorCode::MismatchedCorpora: return "MismatchedCorpora";
    case ErrorCode::EmptyAnnotationSet: return "EmptyAnnotationSet";
    case ErrorCode::DegenerateLabelSpace: return "DegenerateLabelSpace";
    case ErrorCode::InfeasibleSplit: return "InfeasibleSplit";
    case ErrorCode::BadFractions: return "BadFractions";
    case ErrorCode::EncoderFailure: return "EncoderFailure";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::TrainingDiverged: return "TrainingDiverged";
    case ErrorCode::InvalidDistribution: return "InvalidDistribution";
    case ErrorCode::StateNotFrozen: return "StateNotFrozen";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NoDisagreedComments: return "NoDisagreedComments";
    case ErrorCode::SpecInfeasible: return "SpecInfeasible";
    case ErrorCode::UnknownCommand: return "UnknownCommand";
    case ErrorCode::BadFlag: return "BadFlag";
    case ErrorCode::UnknownPreset: return "UnknownPreset";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace perspectra
