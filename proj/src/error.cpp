#include "visdial/error.hpp"

namespace visdial {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::MalformedInput: return "MalformedInput";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::SpecTooLarge: return "SpecTooLarge";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::MalformedLine: return "MalformedLine";
    case Errc::KTooLarge: return "KTooLarge";
    case Errc::NotEnoughAnswers: return "NotEnoughAnswers";
    case Errc::CorpusTooSmall: return "CorpusTooSmall";
    case Errc::MissingImageFeature: return "MissingImageFeature";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::WrongRoundCount: return "WrongRoundCount";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::UnknownQuestion: return "UnknownQuestion";
    case Errc::NonFiniteScore: return "NonFiniteScore";
    case Errc::AlreadyActive: return "AlreadyActive";
    case Errc::AlreadyWaiting: return "AlreadyWaiting";
    case Errc::SessionNotLive: return "SessionNotLive";
    case Errc::EmptyMessage: return "EmptyMessage";
    case Errc::UnknownSession: return "UnknownSession";
    case Errc::NotCompletable: return "NotCompletable";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace visdial
