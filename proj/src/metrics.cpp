#include "visdial/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "visdial/error.hpp"

namespace visdial {

using nlohmann::json;

int rank_of_gt(std::span<const double> scores, int gt_index) {
  if (gt_index < 0 || static_cast<std::size_t>(gt_index) >= scores.size())
    throw Error(Errc::IndexOutOfRange, "gt_index " + std::to_string(gt_index) + " outside [0, " +
                                           std::to_string(scores.size()) + ")");
  const double gt = scores[static_cast<std::size_t>(gt_index)];
  int rank = 1;
  for (double s : scores)
    if (s > gt) ++rank;
  return rank;
}

RankStats rank_stats(std::span<const int> ranks, std::span<const int> ks) {
  if (ranks.empty()) throw Error(Errc::EmptyInput, "no ranks to summarize");
  std::map<int, std::size_t> histogram;
  for (int r : ranks) {
    if (r < 1) throw Error(Errc::InvalidArgument, "rank must be >= 1");
    ++histogram[r];
  }
  const double n = static_cast<double>(ranks.size());
  RankStats s;
  s.count = ranks.size();
  double reciprocal = 0;
  unsigned long long rank_sum = 0;
  for (const auto& [r, c] : histogram) {
    reciprocal += static_cast<double>(c) / r;
    rank_sum += static_cast<unsigned long long>(r) * c;
  }
  s.mrr = reciprocal / n;
  s.mean_rank = static_cast<double>(rank_sum) / n;
  for (int k : ks) {
    std::size_t hits = 0;
    for (const auto& [r, c] : histogram) {
      if (r > k) break;
      hits += c;
    }
    s.recall_at[k] = static_cast<double>(hits) / n;
  }
  return s;
}

RankReport evaluate(const ScoreMatrix& scores, std::span<const int> ks) {
  if (scores.empty()) throw Error(Errc::EmptyInput, "score matrix is empty");
  std::vector<int> all;
  std::map<int, std::vector<int>> by_round;
  all.reserve(scores.size());
  for (const auto& e : scores) {
    const int r = rank_of_gt(e.scores, e.gt_index);
    all.push_back(r);
    by_round[e.round].push_back(r);
  }
  RankReport report;
  report.overall = rank_stats(all, ks);
  for (const auto& [round, ranks] : by_round) report.per_round.emplace(round, rank_stats(ranks, ks));
  return report;
}

DialogReport dialog_eval(std::span<const std::vector<int>> per_dialog_ranks, int k, int curve_max_k) {
  if (per_dialog_ranks.empty()) throw Error(Errc::EmptyInput, "no dialogs to evaluate");
  for (std::size_t i = 0; i < per_dialog_ranks.size(); ++i)
    if (per_dialog_ranks[i].size() != kRoundsPerDialog)
      throw Error(Errc::WrongRoundCount, "dialog #" + std::to_string(i) + " has " +
                                             std::to_string(per_dialog_ranks[i].size()) + " ranks, expected 10");

  auto at_k = [&](int kk) {
    unsigned long long correct = 0, first_fail = 0;
    for (const auto& ranks : per_dialog_ranks) {
      int first = kRoundsPerDialog + 1;
      for (int t = 0; t < kRoundsPerDialog; ++t) {
        if (ranks[static_cast<std::size_t>(t)] <= kk) {
          ++correct;
        } else if (first == kRoundsPerDialog + 1) {
          first = t + 1;
        }
      }
      first_fail += static_cast<unsigned long long>(first);
    }
    const double n = static_cast<double>(per_dialog_ranks.size());
    return DialogCurvePoint{kk, static_cast<double>(correct) / n, static_cast<double>(first_fail) / n};
  };

  DialogReport report;
  report.k = k;
  report.dialogs = per_dialog_ranks.size();
  const auto point = at_k(k);
  report.rounds_correct_mean = point.rounds_correct_mean;
  report.mean_first_failure_round = point.mean_first_failure_round;
  for (int kk = 1; kk <= curve_max_k; ++kk) report.curves.push_back(at_k(kk));
  return report;
}

std::vector<std::vector<int>> ranks_by_dialog(const ScoreMatrix& scores) {
  std::vector<std::string> order;
  std::map<std::string, std::map<int, int>> rounds;
  for (const auto& e : scores) {
    auto [it, fresh] = rounds.try_emplace(e.image_id);
    if (fresh) order.push_back(e.image_id);
    it->second[e.round] = rank_of_gt(e.scores, e.gt_index);
  }
  std::vector<std::vector<int>> out;
  out.reserve(order.size());
  for (const auto& id : order) {
    const auto& rs = rounds.at(id);
    std::vector<int> ranks;
    for (int t = 1; t <= kRoundsPerDialog; ++t) {
      auto it = rs.find(t);
      if (it == rs.end()) throw Error(Errc::WrongRoundCount, "dialog image_id='" + id + "' lacks round " + std::to_string(t));
      ranks.push_back(it->second);
    }
    if (rs.size() != kRoundsPerDialog)
      throw Error(Errc::WrongRoundCount, "dialog image_id='" + id + "' has rounds outside 1..10");
    out.push_back(std::move(ranks));
  }
  return out;
}

OptionsManifest manifest_from_candidates(std::span<const CandidateRecord> records) {
  OptionsManifest m;
  for (const auto& r : records) m[{r.image_id, r.round}] = ManifestEntry{r.set.options.size(), r.set.gt_index};
  return m;
}

ScoreMatrix load_scores(std::istream& in, const OptionsManifest& manifest) {
  ScoreMatrix out;
  std::set<std::pair<std::string, int>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "scores line " + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(Errc::MalformedInput, where + ": " + e.what());
    }
    ScoreEntry e;
    try {
      const auto& id = j.at("image_id");
      e.image_id = id.is_string() ? id.get<std::string>() : id.dump();
      e.round = j.at("round").get<int>();
    } catch (const json::exception& ex) {
      throw Error(Errc::MalformedInput, where + ": " + ex.what());
    }
    const std::string who = "(image_id='" + e.image_id + "', round " + std::to_string(e.round) + ")";
    auto m = manifest.find({e.image_id, e.round});
    if (m == manifest.end()) throw Error(Errc::UnknownQuestion, where + ": no manifest entry for " + who);
    if (!seen.insert({e.image_id, e.round}).second) throw Error(Errc::MalformedInput, where + ": duplicate scores for " + who);
    const auto it = j.find("scores");
    if (it == j.end() || !it->is_array()) throw Error(Errc::MalformedInput, where + ": 'scores' must be an array");
    for (const auto& v : *it) {
      if (v.is_null()) throw Error(Errc::NonFiniteScore, where + ": null score for " + who);
      if (!v.is_number()) throw Error(Errc::MalformedInput, where + ": non-numeric score for " + who);
      const double x = v.get<double>();
      if (!std::isfinite(x)) throw Error(Errc::NonFiniteScore, where + ": non-finite score for " + who);
      e.scores.push_back(x);
    }
    if (e.scores.size() != m->second.options)
      throw Error(Errc::LengthMismatch, where + ": " + std::to_string(e.scores.size()) + " scores for " +
                                            std::to_string(m->second.options) + " options at " + who);
    e.gt_index = m->second.gt_index;
    out.push_back(std::move(e));
  }
  return out;
}

void write_scores(std::ostream& out, const ScoreMatrix& scores) {
  for (const auto& e : scores) {
    nlohmann::ordered_json j;
    j["image_id"] = e.image_id;
    j["round"] = e.round;
    j["scores"] = e.scores;
    out << j.dump() << '\n';
  }
}

namespace {

nlohmann::ordered_json stats_json(const RankStats& s) {
  nlohmann::ordered_json j;
  j["mrr"] = s.mrr;
  nlohmann::ordered_json recall = nlohmann::ordered_json::object();
  for (const auto& [k, v] : s.recall_at) recall[std::to_string(k)] = v;
  j["recall_at"] = std::move(recall);
  j["mean_rank"] = s.mean_rank;
  j["count"] = s.count;
  return j;
}

}  // namespace

nlohmann::ordered_json report_to_json(const RankReport& report) {
  nlohmann::ordered_json j = stats_json(report.overall);
  nlohmann::ordered_json rounds = nlohmann::ordered_json::object();
  for (const auto& [round, s] : report.per_round) rounds[std::to_string(round)] = stats_json(s);
  j["per_round"] = std::move(rounds);
  j["metadata"] = {{"tie_policy", "competition: rank = 1 + count of strictly higher scores"}};
  return j;
}

nlohmann::ordered_json report_to_json(const DialogReport& report) {
  nlohmann::ordered_json j;
  j["k"] = report.k;
  j["dialogs"] = report.dialogs;
  j["rounds_correct_mean"] = report.rounds_correct_mean;
  j["mean_first_failure_round"] = report.mean_first_failure_round;
  auto curves = nlohmann::ordered_json::array();
  for (const auto& p : report.curves)
    curves.push_back({{"k", p.k},
                      {"rounds_correct_mean", p.rounds_correct_mean},
                      {"mean_first_failure_round", p.mean_first_failure_round}});
  j["curves"] = std::move(curves);
  j["metadata"] = {{"first_failure_sentinel", kRoundsPerDialog + 1}};
  return j;
}

std::string report_table(const RankReport& report, const std::string& label) {
  auto recall = [&](int k) {
    auto it = report.overall.recall_at.find(k);
    return it == report.overall.recall_at.end() ? std::numeric_limits<double>::quiet_NaN() : 100.0 * it->second;
  };
  char buf[256];
  std::ostringstream os;
  std::snprintf(buf, sizeof buf, "%-16s %8s %8s %8s %8s %8s\n", "Model", "MRR", "R@1", "R@5", "R@10", "Mean");
  os << buf;
  std::snprintf(buf, sizeof buf, "%-16s %8.4f %8.2f %8.2f %8.2f %8.2f\n", label.c_str(), report.overall.mrr, recall(1),
                recall(5), recall(10), report.overall.mean_rank);
  os << buf;
  return os.str();
}

}  // namespace visdial
