#include "visdial/analysis/stats.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <sstream>
#include <unordered_map>

#include "visdial/error.hpp"
#include "visdial/parallel.hpp"
#include "visdial/text.hpp"

namespace visdial {

namespace {

using Counts = std::array<std::uint64_t, kRoundsPerDialog>;

struct SumCount {
  std::uint64_t sum = 0;
  std::uint64_t count = 0;
};

struct Accumulator {
  std::map<std::size_t, std::uint64_t> q_hist, a_hist;
  Counts q_len_sum{}, a_len_sum{}, per_round{};
  std::unordered_map<std::string, SumCount> q_by_first, a_by_first;
  std::unordered_map<std::string, std::uint64_t> answers;
  Counts q_pronoun{}, a_pronoun{};
  std::uint64_t dialogs_with_pronoun = 0;
  std::array<std::unordered_map<std::string, std::uint64_t>, kRoundsPerDialog> first_word;
  BinaryStats binary;

  void merge(const Accumulator& o) {
    for (const auto& [k, v] : o.q_hist) q_hist[k] += v;
    for (const auto& [k, v] : o.a_hist) a_hist[k] += v;
    for (int r = 0; r < kRoundsPerDialog; ++r) {
      q_len_sum[r] += o.q_len_sum[r];
      a_len_sum[r] += o.a_len_sum[r];
      per_round[r] += o.per_round[r];
      q_pronoun[r] += o.q_pronoun[r];
      a_pronoun[r] += o.a_pronoun[r];
      for (const auto& [w, n] : o.first_word[r]) first_word[r][w] += n;
    }
    for (const auto& [w, s] : o.q_by_first) {
      q_by_first[w].sum += s.sum;
      q_by_first[w].count += s.count;
    }
    for (const auto& [w, s] : o.a_by_first) {
      a_by_first[w].sum += s.sum;
      a_by_first[w].count += s.count;
    }
    for (const auto& [a, n] : o.answers) answers[a] += n;
    dialogs_with_pronoun += o.dialogs_with_pronoun;
    binary.binary_questions += o.binary.binary_questions;
    binary.exact_yes_no += o.binary.exact_yes_no;
    binary.yes_no_with_more += o.binary.yes_no_with_more;
    binary.yes += o.binary.yes;
    binary.no += o.binary.no;
  }
};

bool has_pronoun(const TokenSeq& tokens) {
  return std::any_of(tokens.begin(), tokens.end(), [](const std::string& t) {
    return std::find(std::begin(kPronouns), std::end(kPronouns), t) != std::end(kPronouns);
  });
}

bool is_binary_question(const TokenSeq& q) {
  return !q.empty() &&
         std::find(std::begin(kBinaryQuestionStarts), std::end(kBinaryQuestionStarts), q.front()) !=
             std::end(kBinaryQuestionStarts);
}

void accumulate(const Dialog& d, Accumulator& acc) {
  bool any_pronoun = false;
  for (const auto& round : d.rounds) {
    const auto r = static_cast<std::size_t>(round.round_index - 1);
    const TokenSeq q = preprocess_text(round.question);
    const TokenSeq a = preprocess_text(round.answer);
    ++acc.q_hist[q.size()];
    ++acc.a_hist[a.size()];
    acc.q_len_sum[r] += q.size();
    acc.a_len_sum[r] += a.size();
    ++acc.per_round[r];
    const std::string first = q.empty() ? std::string() : q.front();
    auto& qs = acc.q_by_first[first];
    qs.sum += q.size();
    ++qs.count;
    auto& as = acc.a_by_first[first];
    as.sum += a.size();
    ++as.count;
    ++acc.first_word[r][first];
    ++acc.answers[join_tokens(a)];
    const bool qp = has_pronoun(q), ap = has_pronoun(a);
    acc.q_pronoun[r] += qp;
    acc.a_pronoun[r] += ap;
    any_pronoun = any_pronoun || qp || ap;
    if (is_binary_question(q)) {
      ++acc.binary.binary_questions;
      if (!a.empty() && (a.front() == "yes" || a.front() == "no")) {
        (a.size() == 1 ? acc.binary.exact_yes_no : acc.binary.yes_no_with_more) += 1;
        (a.front() == "yes" ? acc.binary.yes : acc.binary.no) += 1;
      }
    }
  }
  acc.dialogs_with_pronoun += any_pronoun;
}

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

LengthStats finish_lengths(const std::map<std::size_t, std::uint64_t>& hist, const Counts& sums, const Counts& per_round,
                           const std::unordered_map<std::string, SumCount>& by_first) {
  LengthStats s;
  s.histogram = hist;
  std::uint64_t total = 0;
  for (const auto& [len, n] : hist) {
    s.count += n;
    total += len * n;
  }
  s.mean = ratio(total, s.count);
  for (int r = 0; r < kRoundsPerDialog; ++r)
    if (per_round[r] > 0) s.mean_by_round[r + 1] = ratio(sums[r], per_round[r]);
  for (const auto& [w, sc] : by_first) s.mean_by_first_word[w] = ratio(sc.sum, sc.count);
  return s;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

double coverage_at(const StatsReport& report, std::uint64_t top_n) {
  std::uint64_t covered = 0;
  const auto n = std::min<std::uint64_t>(top_n, report.answer_counts.size());
  for (std::uint64_t i = 0; i < n; ++i) covered += report.answer_counts[i];
  return ratio(covered, report.total_answers);
}

StatsReport dataset_stats(std::span<const Dialog> dialogs, unsigned workers) {
  if (dialogs.empty()) throw Error(Errc::EmptyInput, "no dialogs to analyze");
  constexpr std::size_t kChunks = 64;
  std::vector<Accumulator> parts(std::min(kChunks, dialogs.size()));
  parallel_chunks(dialogs.size(), parts.size(), workers, [&](std::size_t b, std::size_t e, std::size_t c) {
    for (std::size_t i = b; i < e; ++i) accumulate(dialogs[i], parts[c]);
  });
  Accumulator acc = std::move(parts.front());
  for (std::size_t c = 1; c < parts.size(); ++c) acc.merge(parts[c]);

  StatsReport rep;
  rep.dialogs = dialogs.size();
  rep.question_length = finish_lengths(acc.q_hist, acc.q_len_sum, acc.per_round, acc.q_by_first);
  rep.answer_length = finish_lengths(acc.a_hist, acc.a_len_sum, acc.per_round, acc.a_by_first);
  rep.questions = rep.question_length.count;

  rep.answer_counts.reserve(acc.answers.size());
  for (const auto& [a, n] : acc.answers) rep.answer_counts.push_back(n);
  std::sort(rep.answer_counts.begin(), rep.answer_counts.end(), std::greater<>());
  rep.unique_answer_count = rep.answer_counts.size();
  rep.total_answers = rep.questions;
  std::uint64_t cumulative = 0;
  std::uint64_t next_checkpoint = 1;
  for (std::uint64_t i = 0; i < rep.answer_counts.size(); ++i) {
    cumulative += rep.answer_counts[i];
    const std::uint64_t n = i + 1;
    if (n == next_checkpoint || n == rep.answer_counts.size()) {
      rep.coverage_curve.push_back(CoveragePoint{n, ratio(cumulative, rep.total_answers)});
      // 1, 2, 5, 10, 20, 50, ...
      std::uint64_t mag = 1;
      while (mag * 10 <= next_checkpoint) mag *= 10;
      const std::uint64_t digit = next_checkpoint / mag;
      next_checkpoint = digit == 1 ? 2 * mag : digit == 2 ? 5 * mag : 10 * mag;
    }
  }

  for (int r = 0; r < kRoundsPerDialog; ++r) {
    if (acc.per_round[r] == 0) continue;
    rep.pronoun.question_rate_by_round[r + 1] = ratio(acc.q_pronoun[r], acc.per_round[r]);
    rep.pronoun.answer_rate_by_round[r + 1] = ratio(acc.a_pronoun[r], acc.per_round[r]);
  }
  std::uint64_t qp = 0, ap = 0;
  for (int r = 0; r < kRoundsPerDialog; ++r) {
    qp += acc.q_pronoun[r];
    ap += acc.a_pronoun[r];
  }
  rep.pronoun.question_rate = ratio(qp, rep.questions);
  rep.pronoun.answer_rate = ratio(ap, rep.questions);
  rep.pronoun.dialog_rate = ratio(acc.dialogs_with_pronoun, rep.dialogs);

  for (int r = 0; r < kRoundsPerDialog; ++r)
    for (const auto& [w, n] : acc.first_word[r]) rep.question_type_by_round[r + 1][w] = n;

  rep.binary = acc.binary;
  rep.binary.binary_question_rate = ratio(acc.binary.binary_questions, rep.questions);
  rep.binary.yes_rate = ratio(acc.binary.yes, acc.binary.yes + acc.binary.no);
  return rep;
}

nlohmann::ordered_json stats_to_json(const StatsReport& r) {
  auto lengths = [](const LengthStats& s) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json hist = nlohmann::ordered_json::object();
    for (const auto& [len, n] : s.histogram) hist[std::to_string(len)] = n;
    j["histogram"] = std::move(hist);
    j["count"] = s.count;
    j["mean"] = s.mean;
    nlohmann::ordered_json by_round = nlohmann::ordered_json::object();
    for (const auto& [round, m] : s.mean_by_round) by_round[std::to_string(round)] = m;
    j["mean_by_round"] = std::move(by_round);
    nlohmann::ordered_json by_first = nlohmann::ordered_json::object();
    for (const auto& [w, m] : s.mean_by_first_word) by_first[w] = m;
    j["mean_by_first_word"] = std::move(by_first);
    return j;
  };
  nlohmann::ordered_json j;
  j["dialogs"] = r.dialogs;
  j["questions"] = r.questions;
  j["question_length"] = lengths(r.question_length);
  j["answer_length"] = lengths(r.answer_length);
  j["unique_answer_count"] = r.unique_answer_count;
  j["total_answers"] = r.total_answers;
  auto curve = nlohmann::ordered_json::array();
  for (const auto& p : r.coverage_curve) curve.push_back({{"top_n", p.top_n}, {"fraction", p.fraction}});
  j["coverage_curve"] = std::move(curve);
  nlohmann::ordered_json pron;
  nlohmann::ordered_json qr = nlohmann::ordered_json::object(), ar = nlohmann::ordered_json::object();
  for (const auto& [round, v] : r.pronoun.question_rate_by_round) qr[std::to_string(round)] = v;
  for (const auto& [round, v] : r.pronoun.answer_rate_by_round) ar[std::to_string(round)] = v;
  pron["question_rate_by_round"] = std::move(qr);
  pron["answer_rate_by_round"] = std::move(ar);
  pron["question_rate"] = r.pronoun.question_rate;
  pron["answer_rate"] = r.pronoun.answer_rate;
  pron["dialog_rate"] = r.pronoun.dialog_rate;
  pron["pronouns"] = std::vector<std::string>(std::begin(kPronouns), std::end(kPronouns));
  j["pronoun"] = std::move(pron);
  nlohmann::ordered_json qtype = nlohmann::ordered_json::object();
  for (const auto& [round, words] : r.question_type_by_round) {
    nlohmann::ordered_json w = nlohmann::ordered_json::object();
    for (const auto& [word, n] : words) w[word] = n;
    qtype[std::to_string(round)] = std::move(w);
  }
  j["question_type_by_round"] = std::move(qtype);
  j["binary"] = {{"binary_questions", r.binary.binary_questions},
                 {"binary_question_rate", r.binary.binary_question_rate},
                 {"exact_yes_no", r.binary.exact_yes_no},
                 {"yes_no_with_more", r.binary.yes_no_with_more},
                 {"yes", r.binary.yes},
                 {"no", r.binary.no},
                 {"yes_rate", r.binary.yes_rate}};
  j["metadata"] = {{"lengths", "tokens after preprocessing"},
                   {"answer_identity", "normalized token string"},
                   {"pronoun_dialog_rate", "questions and answers only, captions excluded"}};
  return j;
}

std::string lengths_by_round_csv(const StatsReport& r) {
  std::ostringstream os;
  os << "round,mean_question_length,mean_answer_length\n";
  for (const auto& [round, q] : r.question_length.mean_by_round)
    os << round << ',' << fmt(q) << ',' << fmt(r.answer_length.mean_by_round.at(round)) << '\n';
  return os.str();
}

std::string question_types_by_round_csv(const StatsReport& r, std::size_t top) {
  // Columns: the overall most common first words; rows: rounds.
  std::map<std::string, std::uint64_t> overall;
  for (const auto& [round, words] : r.question_type_by_round)
    for (const auto& [w, n] : words) overall[w] += n;
  std::vector<std::pair<std::string, std::uint64_t>> ranked(overall.begin(), overall.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > top) ranked.resize(top);
  std::ostringstream os;
  os << "round";
  for (const auto& [w, n] : ranked) os << ',' << (w.empty() ? "<empty>" : w);
  os << '\n';
  for (const auto& [round, words] : r.question_type_by_round) {
    std::uint64_t total = 0;
    for (const auto& [w, n] : words) total += n;
    os << round;
    for (const auto& [w, n] : ranked) {
      auto it = words.find(w);
      os << ',' << fmt(ratio(it == words.end() ? 0 : it->second, total));
    }
    os << '\n';
  }
  return os.str();
}

std::string coverage_csv(const StatsReport& r) {
  std::ostringstream os;
  os << "top_n,fraction\n";
  for (const auto& p : r.coverage_curve) os << p.top_n << ',' << fmt(p.fraction) << '\n';
  return os.str();
}

std::string pronouns_by_round_csv(const StatsReport& r) {
  std::ostringstream os;
  os << "round,question_rate,answer_rate\n";
  for (const auto& [round, q] : r.pronoun.question_rate_by_round)
    os << round << ',' << fmt(q) << ',' << fmt(r.pronoun.answer_rate_by_round.at(round)) << '\n';
  return os.str();
}

}  // namespace visdial
