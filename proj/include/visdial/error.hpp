#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace visdial {

enum class Errc {
  InvalidArgument,
  MalformedInput,
  SchemaViolation,
  EmptyCorpus,
  SpecTooLarge,
  DimensionMismatch,
  MalformedLine,
  KTooLarge,
  NotEnoughAnswers,
  CorpusTooSmall,
  MissingImageFeature,
  IndexOutOfRange,
  EmptyInput,
  WrongRoundCount,
  LengthMismatch,
  UnknownQuestion,
  NonFiniteScore,
  AlreadyActive,
  AlreadyWaiting,
  SessionNotLive,
  EmptyMessage,
  UnknownSession,
  NotCompletable,
  Io,
};

std::string_view errc_name(Errc code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace visdial
