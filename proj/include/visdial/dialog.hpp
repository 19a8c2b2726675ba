#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace visdial {

inline constexpr int kRoundsPerDialog = 10;
inline constexpr int kOptionsPerQuestion = 100;

/// Answer options attached to a round in the dataset file.
struct AnswerOptions {
  std::vector<std::string> options;
  int gt_index = 0;

  friend bool operator==(const AnswerOptions&, const AnswerOptions&) = default;
};

struct QaRound {
  int round_index = 0;  // 1..10
  std::string question;
  std::string answer;
  std::optional<AnswerOptions> candidates;

  friend bool operator==(const QaRound&, const QaRound&) = default;
};

struct Dialog {
  std::string image_id;
  std::optional<std::string> image_url;
  std::string caption;
  std::vector<QaRound> rounds;

  friend bool operator==(const Dialog&, const Dialog&) = default;
};

/// Throws Error(SchemaViolation) naming the image_id when `d` breaks an invariant.
void validate_dialog(const Dialog& d);

}  // namespace visdial
