#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "visdial/text.hpp"
#include "visdial/vocabulary.hpp"

namespace visdial {

inline constexpr std::string_view kSentenceEnd = "</s>";
inline constexpr std::string_view kSentenceStart = "<s>";
/// Separates conditioning context from the predicted utterance.
inline constexpr std::string_view kContextBoundary = "<sep>";

enum class Smoothing {
  none,          // maximum likelihood; unseen contexts back off to shorter ones
  add_k,         // (c(h,w) + k) / (c(h) + k|V|) at the full order only
  interpolated,  // (c(h,w) + k|V| P_lower(w|h')) / (c(h) + k|V|), recursively
};

struct LmConfig {
  int order = 3;
  Smoothing smoothing = Smoothing::interpolated;
  double k = 0.01;
  int min_count = 1;
};

/// Log-probability mass of a scored span and the number of predicted tokens.
struct SequenceScore {
  double log_prob = 0;
  std::size_t tokens = 0;

  SequenceScore& operator+=(const SequenceScore& o) {
    log_prob += o.log_prob;
    tokens += o.tokens;
    return *this;
  }
};

/// Order-n count model over a closed vocabulary (training tokens with
/// frequency >= min_count, plus <unk> and </s>). <s> pads histories and is
/// never predicted.
class NgramLM {
 public:
  int order() const noexcept { return config_.order; }
  const LmConfig& config() const noexcept { return config_; }
  const Vocabulary& vocabulary() const noexcept { return vocab_; }
  /// Number of predictable symbols: vocabulary plus </s>.
  std::size_t predicted_size() const noexcept { return vocab_.size() + 1; }
  std::int32_t end_id() const noexcept { return static_cast<std::int32_t>(vocab_.size()); }
  std::int32_t start_id() const noexcept { return static_cast<std::int32_t>(vocab_.size()) + 1; }

  std::vector<std::int32_t> encode(const TokenSeq& tokens) const { return vocab_.encode(tokens); }

  /// P(word | history); history may be longer than order-1 (only the tail
  /// is used) and may contain start_id() padding.
  double probability(std::span<const std::int32_t> history, std::int32_t word) const;
  /// Full next-token distribution, indexed by id (end_id() last).
  std::vector<double> distribution(std::span<const std::int32_t> history) const;

  /// Scores `target` followed by </s>, after feeding `context` unscored.
  SequenceScore score(const TokenSeq& context, const TokenSeq& target) const;

 private:
  friend NgramLM train_lm(std::span<const TokenSeq> corpus, const LmConfig& config);

  struct ContextCounts {
    std::uint64_t total = 0;
    std::unordered_map<std::int32_t, std::uint64_t> next;
  };
  using Table = std::unordered_map<std::string, ContextCounts>;

  static std::string key(std::span<const std::int32_t> ids);
  const ContextCounts* find(std::size_t context_len, std::span<const std::int32_t> context) const;

  LmConfig config_;
  Vocabulary vocab_;
  std::vector<Table> tables_;  // tables_[m] holds contexts of length m
};

/// Counts every n-gram of every sequence (each padded with <s> and closed by
/// </s>). Throws EmptyCorpus, InvalidArgument (order < 1, k <= 0 when smoothing).
NgramLM train_lm(std::span<const TokenSeq> corpus, const LmConfig& config);

/// exp(-(1/T) sum log P) over the tokens plus </s>.
double perplexity(const NgramLM& lm, const TokenSeq& sequence);
double perplexity(const SequenceScore& score);

}  // namespace visdial
