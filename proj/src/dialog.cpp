#include "visdial/dialog.hpp"

#include <algorithm>
#include <cctype>

#include "visdial/error.hpp"
#include "visdial/text.hpp"

namespace visdial {

namespace {

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

[[noreturn]] void violation(const Dialog& d, const std::string& what) {
  throw Error(Errc::SchemaViolation, "dialog image_id='" + d.image_id + "': " + what);
}

}  // namespace

void validate_dialog(const Dialog& d) {
  if (blank(d.image_id)) violation(d, "empty image_id");
  if (blank(d.caption)) violation(d, "empty caption");
  if (d.rounds.size() != kRoundsPerDialog)
    violation(d, "expected 10 rounds, found " + std::to_string(d.rounds.size()));
  for (std::size_t i = 0; i < d.rounds.size(); ++i) {
    const auto& r = d.rounds[i];
    const std::string where = "round " + std::to_string(i + 1) + ": ";
    if (r.round_index != static_cast<int>(i) + 1) violation(d, where + "round_index out of order");
    if (blank(r.question)) violation(d, where + "empty question");
    if (blank(r.answer)) violation(d, where + "empty answer");
    if (!r.candidates) continue;
    const auto& c = *r.candidates;
    if (c.options.size() != kOptionsPerQuestion)
      violation(d, where + "expected 100 answer_options, found " + std::to_string(c.options.size()));
    if (c.gt_index < 0 || c.gt_index >= static_cast<int>(c.options.size()))
      violation(d, where + "gt_index out of range");
    if (normalize_text(c.options[static_cast<std::size_t>(c.gt_index)]) != normalize_text(r.answer))
      violation(d, where + "answer does not appear at gt_index");
  }
}

}  // namespace visdial
