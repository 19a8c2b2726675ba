#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "visdial/analysis/ngram_lm.hpp"
#include "visdial/analysis/topics.hpp"
#include "visdial/dialog.hpp"

namespace visdial {

struct TokenizedDialog {
  TokenSeq caption;
  std::array<TokenSeq, kRoundsPerDialog> questions;
  std::array<TokenSeq, kRoundsPerDialog> answers;
};

TokenizedDialog tokenize_dialog(const Dialog& d);
std::vector<TokenizedDialog> tokenize_dialogs(std::span<const Dialog> dialogs, unsigned workers = 1);

using RoundOrder = std::array<int, kRoundsPerDialog>;

inline constexpr RoundOrder kIdentityOrder = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};

/// One (context, target) pair per round: the first question is conditioned
/// on the caption, every later question on the preceding question and answer.
/// `order` lists round indices in presentation order.
struct ConditionedQuestion {
  TokenSeq context;
  const TokenSeq* target;
};
std::vector<ConditionedQuestion> conditioned_questions(const TokenizedDialog& d, const RoundOrder& order);

/// Training sequences `context <sep> question` for every round in natural order.
std::vector<TokenSeq> lm_training_sequences(std::span<const TokenizedDialog> dialogs);

/// Sum of log-probabilities of every question of `d` under `order`.
SequenceScore score_dialog(const NgramLM& lm, const TokenizedDialog& d, const RoundOrder& order);

struct ShuffleResult {
  double ppl_original = 0;
  MeanSd ppl_shuffled;
  double accuracy = 0;
  double accuracy_sd = 0;
  /// Share of trials whose corpus-level shuffled perplexity beats the original.
  double shuffled_higher_fraction = 0;
  std::size_t pairs = 0;
  int permutations = 0;
};

/// Returns the round order for (dialog index, trial).
using Permuter = std::function<RoundOrder(std::size_t dialog, int trial)>;

/// For every dialog and trial, compares the perplexity of the natural order
/// with a permuted order. A pair is classified correctly when the permuted
/// perplexity is strictly higher; equal perplexities (relative 1e-12) count
/// one half. Throws EmptyInput, InvalidArgument.
ShuffleResult shuffle_classification(const NgramLM& lm, std::span<const TokenizedDialog> dialogs, int permutations,
                                     const Permuter& permuter, unsigned workers = 1);

/// Seeded uniform permutations: trial t of dialog i uses derive_seed(seed, t, i).
ShuffleResult shuffle_classification(const NgramLM& lm, std::span<const TokenizedDialog> dialogs, int permutations,
                                     std::uint64_t seed, unsigned workers = 1);

}  // namespace visdial
