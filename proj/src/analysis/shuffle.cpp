#include "visdial/analysis/shuffle.hpp"

#include <cmath>

#include "visdial/error.hpp"
#include "visdial/parallel.hpp"
#include "visdial/random.hpp"

namespace visdial {

TokenizedDialog tokenize_dialog(const Dialog& d) {
  TokenizedDialog t;
  t.caption = preprocess_text(d.caption);
  for (std::size_t r = 0; r < kRoundsPerDialog && r < d.rounds.size(); ++r) {
    t.questions[r] = preprocess_text(d.rounds[r].question);
    t.answers[r] = preprocess_text(d.rounds[r].answer);
  }
  return t;
}

std::vector<TokenizedDialog> tokenize_dialogs(std::span<const Dialog> dialogs, unsigned workers) {
  std::vector<TokenizedDialog> out(dialogs.size());
  parallel_for(dialogs.size(), workers, [&](std::size_t i) { out[i] = tokenize_dialog(dialogs[i]); });
  return out;
}

std::vector<ConditionedQuestion> conditioned_questions(const TokenizedDialog& d, const RoundOrder& order) {
  std::vector<ConditionedQuestion> out;
  out.reserve(kRoundsPerDialog);
  for (std::size_t p = 0; p < kRoundsPerDialog; ++p) {
    ConditionedQuestion cq;
    if (p == 0) {
      cq.context = d.caption;
    } else {
      const auto prev = static_cast<std::size_t>(order[p - 1]);
      cq.context = d.questions[prev];
      cq.context.insert(cq.context.end(), d.answers[prev].begin(), d.answers[prev].end());
    }
    cq.context.emplace_back(kContextBoundary);
    cq.target = &d.questions[static_cast<std::size_t>(order[p])];
    out.push_back(std::move(cq));
  }
  return out;
}

std::vector<TokenSeq> lm_training_sequences(std::span<const TokenizedDialog> dialogs) {
  std::vector<TokenSeq> out;
  out.reserve(dialogs.size() * kRoundsPerDialog);
  for (const auto& d : dialogs) {
    for (auto& cq : conditioned_questions(d, kIdentityOrder)) {
      TokenSeq seq = std::move(cq.context);
      seq.insert(seq.end(), cq.target->begin(), cq.target->end());
      out.push_back(std::move(seq));
    }
  }
  return out;
}

SequenceScore score_dialog(const NgramLM& lm, const TokenizedDialog& d, const RoundOrder& order) {
  SequenceScore total;
  for (const auto& cq : conditioned_questions(d, order)) total += lm.score(cq.context, *cq.target);
  return total;
}

ShuffleResult shuffle_classification(const NgramLM& lm, std::span<const TokenizedDialog> dialogs, int permutations,
                                     const Permuter& permuter, unsigned workers) {
  if (dialogs.empty()) throw Error(Errc::EmptyInput, "no dialogs for the shuffle experiment");
  if (permutations < 1) throw Error(Errc::InvalidArgument, "permutations must be >= 1");
  const std::size_t n = dialogs.size();
  const auto trials = static_cast<std::size_t>(permutations);

  std::vector<SequenceScore> original(n);
  // Slot [t * n + i] holds dialog i under trial t.
  std::vector<SequenceScore> shuffled(n * trials);
  parallel_for(n, workers, [&](std::size_t i) {
    original[i] = score_dialog(lm, dialogs[i], kIdentityOrder);
    for (std::size_t t = 0; t < trials; ++t)
      shuffled[t * n + i] = score_dialog(lm, dialogs[i], permuter(i, static_cast<int>(t)));
  });

  SequenceScore corpus_original;
  for (const auto& s : original) corpus_original += s;

  ShuffleResult r;
  r.ppl_original = perplexity(corpus_original);
  r.permutations = permutations;
  r.pairs = n * trials;
  std::vector<double> trial_ppl, trial_accuracy;
  std::size_t higher = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    SequenceScore corpus;
    double correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = shuffled[t * n + i];
      corpus += s;
      const double po = perplexity(original[i]);
      const double ps = perplexity(s);
      if (std::abs(ps - po) <= 1e-12 * std::max(std::abs(ps), std::abs(po))) {
        correct += 0.5;
      } else if (ps > po) {
        correct += 1.0;
      }
    }
    const double ppl = perplexity(corpus);
    trial_ppl.push_back(ppl);
    trial_accuracy.push_back(correct / static_cast<double>(n));
    higher += ppl > r.ppl_original * (1 + 1e-12);
  }
  r.ppl_shuffled = mean_sd(trial_ppl);
  const MeanSd acc = mean_sd(trial_accuracy);
  r.accuracy = acc.mean;
  r.accuracy_sd = acc.sd;
  r.shuffled_higher_fraction = static_cast<double>(higher) / static_cast<double>(trials);
  return r;
}

ShuffleResult shuffle_classification(const NgramLM& lm, std::span<const TokenizedDialog> dialogs, int permutations,
                                     std::uint64_t seed, unsigned workers) {
  return shuffle_classification(
      lm, dialogs, permutations,
      [seed](std::size_t dialog, int trial) {
        RoundOrder order = kIdentityOrder;
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(trial), dialog));
        rng.shuffle(std::span(order));
        return order;
      },
      workers);
}

}  // namespace visdial
