#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "visdial/candidates.hpp"

namespace visdial {

/// 1 + number of options scored strictly above the ground truth. Ties never
/// push the ground truth down. Throws IndexOutOfRange.
int rank_of_gt(std::span<const double> scores, int gt_index);

struct ScoreEntry {
  std::string image_id;
  int round = 0;
  std::vector<double> scores;
  int gt_index = 0;

  friend bool operator==(const ScoreEntry&, const ScoreEntry&) = default;
};

using ScoreMatrix = std::vector<ScoreEntry>;

inline constexpr int kDefaultRecallKs[] = {1, 5, 10};

struct RankStats {
  double mrr = 0;
  std::map<int, double> recall_at;
  double mean_rank = 0;
  std::size_t count = 0;
};

struct RankReport {
  RankStats overall;
  std::map<int, RankStats> per_round;
};

/// MRR, recall@k and mean rank over every entry, plus a per-round split.
/// Sums run over a rank histogram, so the result does not depend on entry
/// order. Throws EmptyInput.
RankReport evaluate(const ScoreMatrix& scores, std::span<const int> ks = kDefaultRecallKs);

/// Same statistics straight from a list of ranks.
RankStats rank_stats(std::span<const int> ranks, std::span<const int> ks);

struct DialogCurvePoint {
  int k = 0;
  double rounds_correct_mean = 0;
  double mean_first_failure_round = 0;
};

struct DialogReport {
  int k = 5;
  double rounds_correct_mean = 0;
  double mean_first_failure_round = 0;
  std::size_t dialogs = 0;
  std::vector<DialogCurvePoint> curves;
};

/// A round succeeds when its rank is <= k. The first failure round is 11
/// when all ten rounds succeed. With curve_max_k > 0 the curves hold every
/// k in 1..curve_max_k. Throws WrongRoundCount, EmptyInput.
DialogReport dialog_eval(std::span<const std::vector<int>> per_dialog_ranks, int k = 5, int curve_max_k = 0);

/// Groups a score matrix into per-dialog 10-round rank vectors, in first-seen
/// image order. Throws WrongRoundCount for dialogs without rounds 1..10.
std::vector<std::vector<int>> ranks_by_dialog(const ScoreMatrix& scores);

/// Option counts and ground truth per question, usually from a candidates file.
struct ManifestEntry {
  std::size_t options = 0;
  int gt_index = 0;
};
using OptionsManifest = std::map<std::pair<std::string, int>, ManifestEntry>;

OptionsManifest manifest_from_candidates(std::span<const CandidateRecord> records);

/// Reads score JSONL ({"image_id", "round", "scores"}) aligned to the
/// manifest. Throws LengthMismatch, UnknownQuestion, NonFiniteScore (a null
/// score counts as non-finite), MalformedInput.
ScoreMatrix load_scores(std::istream& in, const OptionsManifest& manifest);
void write_scores(std::ostream& out, const ScoreMatrix& scores);

nlohmann::ordered_json report_to_json(const RankReport& report);
nlohmann::ordered_json report_to_json(const DialogReport& report);
/// Plain-text table in the column order MRR, R@1, R@5, R@10, Mean.
std::string report_table(const RankReport& report, const std::string& label);

}  // namespace visdial
