#include "visdial/analysis/ngram_lm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "visdial/error.hpp"

namespace visdial {

std::string NgramLM::key(std::span<const std::int32_t> ids) {
  std::string k(ids.size() * sizeof(std::int32_t), '\0');
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t b = 0; b < sizeof(std::int32_t); ++b)
      k[i * sizeof(std::int32_t) + b] = static_cast<char>((static_cast<std::uint32_t>(ids[i]) >> (8 * b)) & 0xff);
  return k;
}

const NgramLM::ContextCounts* NgramLM::find(std::size_t context_len, std::span<const std::int32_t> context) const {
  const auto& table = tables_[context_len];
  auto it = table.find(key(context));
  return it == table.end() ? nullptr : &it->second;
}

double NgramLM::probability(std::span<const std::int32_t> history, std::int32_t word) const {
  const auto n = static_cast<std::size_t>(config_.order);
  const double vocab = static_cast<double>(predicted_size());
  auto context_of = [&](std::size_t len) -> std::span<const std::int32_t> {
    if (len == 0) return {};
    if (history.size() >= len) return history.subspan(history.size() - len);
    return {};
  };
  // Contexts shorter than requested (short histories) are treated as unseen.
  auto counts_at = [&](std::size_t len, std::uint64_t& c_h, std::uint64_t& c_hw) {
    c_h = c_hw = 0;
    if (len > 0 && history.size() < len) return;
    if (const auto* cc = find(len, context_of(len))) {
      c_h = cc->total;
      if (auto it = cc->next.find(word); it != cc->next.end()) c_hw = it->second;
    }
  };

  std::uint64_t c_h = 0, c_hw = 0;
  switch (config_.smoothing) {
    case Smoothing::add_k:
      counts_at(n - 1, c_h, c_hw);
      return (static_cast<double>(c_hw) + config_.k) / (static_cast<double>(c_h) + config_.k * vocab);
    case Smoothing::none: {
      double p = 1.0 / vocab;
      for (std::size_t len = 0; len < n; ++len) {
        counts_at(len, c_h, c_hw);
        if (c_h > 0) p = static_cast<double>(c_hw) / static_cast<double>(c_h);
      }
      return p;
    }
    case Smoothing::interpolated: {
      const double alpha = config_.k * vocab;
      double p = 1.0 / vocab;
      for (std::size_t len = 0; len < n; ++len) {
        counts_at(len, c_h, c_hw);
        p = (static_cast<double>(c_hw) + alpha * p) / (static_cast<double>(c_h) + alpha);
      }
      return p;
    }
  }
  return 0.0;
}

std::vector<double> NgramLM::distribution(std::span<const std::int32_t> history) const {
  std::vector<double> dist(predicted_size());
  for (std::size_t w = 0; w < dist.size(); ++w) dist[w] = probability(history, static_cast<std::int32_t>(w));
  return dist;
}

SequenceScore NgramLM::score(const TokenSeq& context, const TokenSeq& target) const {
  std::vector<std::int32_t> history(static_cast<std::size_t>(config_.order - 1), start_id());
  for (const auto& t : context) history.push_back(vocab_.id(t));
  SequenceScore s;
  auto predict = [&](std::int32_t w) {
    s.log_prob += std::log(probability(history, w));
    ++s.tokens;
    history.push_back(w);
  };
  for (const auto& t : target) predict(vocab_.id(t));
  predict(end_id());
  return s;
}

NgramLM train_lm(std::span<const TokenSeq> corpus, const LmConfig& config) {
  if (config.order < 1) throw Error(Errc::InvalidArgument, "order must be >= 1");
  if (config.smoothing != Smoothing::none && !(config.k > 0)) throw Error(Errc::InvalidArgument, "k must be positive");
  if (corpus.empty()) throw Error(Errc::EmptyCorpus, "no training sequences");

  NgramLM lm;
  lm.config_ = config;
  // Empty sequences still contribute </s>; the vocabulary needs at least one token.
  bool any_token = std::any_of(corpus.begin(), corpus.end(), [](const TokenSeq& s) { return !s.empty(); });
  if (any_token) {
    lm.vocab_ = build_vocabulary(corpus, config.min_count);
  } else {
    const TokenSeq placeholder{std::string(kUnkToken)};
    lm.vocab_ = build_vocabulary(std::span(&placeholder, 1), 1);
  }

  const auto n = static_cast<std::size_t>(config.order);
  lm.tables_.resize(n);
  std::vector<std::int32_t> ids;
  for (const auto& seq : corpus) {
    ids.assign(n - 1, lm.start_id());
    for (const auto& t : seq) ids.push_back(lm.vocab_.id(t));
    ids.push_back(lm.end_id());
    for (std::size_t pos = n - 1; pos < ids.size(); ++pos) {
      const std::int32_t w = ids[pos];
      for (std::size_t len = 0; len < n; ++len) {
        auto& cc = lm.tables_[len][NgramLM::key(std::span(ids).subspan(pos - len, len))];
        ++cc.total;
        ++cc.next[w];
      }
    }
  }
  return lm;
}

double perplexity(const SequenceScore& score) {
  if (score.tokens == 0) return std::numeric_limits<double>::quiet_NaN();
  return std::exp(-score.log_prob / static_cast<double>(score.tokens));
}

double perplexity(const NgramLM& lm, const TokenSeq& sequence) { return perplexity(lm.score({}, sequence)); }

}  // namespace visdial
