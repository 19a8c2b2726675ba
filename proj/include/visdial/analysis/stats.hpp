#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "visdial/dialog.hpp"

namespace visdial {

/// Pronouns counted by the coreference statistics.
inline constexpr std::string_view kPronouns[] = {"he", "she", "his", "her", "it", "their", "they", "this", "that", "those"};
/// First words that make a question binary.
inline constexpr std::string_view kBinaryQuestionStarts[] = {"do",  "did", "have", "has",  "is",
                                                             "are", "was", "were", "can", "could"};

struct LengthStats {
  std::map<std::size_t, std::uint64_t> histogram;  // token count -> occurrences
  std::uint64_t count = 0;
  double mean = 0;
  std::map<int, double> mean_by_round;
  /// Keyed by the question's first token ("" for empty questions).
  std::map<std::string, double> mean_by_first_word;
};

struct CoveragePoint {
  std::uint64_t top_n = 0;
  double fraction = 0;
};

struct PronounStats {
  std::map<int, double> question_rate_by_round;
  std::map<int, double> answer_rate_by_round;
  double question_rate = 0;
  double answer_rate = 0;
  double dialog_rate = 0;  // captions excluded
};

struct BinaryStats {
  std::uint64_t binary_questions = 0;
  double binary_question_rate = 0;
  std::uint64_t exact_yes_no = 0;      // answer is exactly "yes" or "no"
  std::uint64_t yes_no_with_more = 0;  // starts with yes/no, then more
  std::uint64_t yes = 0;
  std::uint64_t no = 0;
  double yes_rate = 0;  // yes / (yes + no) over both categories
};

struct StatsReport {
  std::size_t dialogs = 0;
  std::uint64_t questions = 0;
  LengthStats question_length;
  LengthStats answer_length;
  std::uint64_t unique_answer_count = 0;
  std::uint64_t total_answers = 0;
  std::vector<CoveragePoint> coverage_curve;
  /// Counts of each distinct normalized answer, descending.
  std::vector<std::uint64_t> answer_counts;
  PronounStats pronoun;
  std::map<int, std::map<std::string, std::uint64_t>> question_type_by_round;
  BinaryStats binary;
};

/// Fraction of all answers covered by the `top_n` most frequent answers.
double coverage_at(const StatsReport& report, std::uint64_t top_n);

/// Corpus statistics over tokenized questions and answers. Work is split
/// into fixed chunks with integer accumulators, so the report is identical
/// for any worker count. Throws EmptyInput.
StatsReport dataset_stats(std::span<const Dialog> dialogs, unsigned workers = 1);

nlohmann::ordered_json stats_to_json(const StatsReport& report);

std::string lengths_by_round_csv(const StatsReport& report);
std::string question_types_by_round_csv(const StatsReport& report, std::size_t top = 20);
std::string coverage_csv(const StatsReport& report);
std::string pronouns_by_round_csv(const StatsReport& report);

}  // namespace visdial
