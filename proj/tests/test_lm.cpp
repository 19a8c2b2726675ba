#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "support/synthetic.hpp"
#include "visdial/analysis/ngram_lm.hpp"
#include "visdial/analysis/shuffle.hpp"
#include "visdial/error.hpp"
#include "visdial/random.hpp"

using namespace visdial;
using namespace visdial::testing;

namespace {

LmConfig config(int order, Smoothing s, double k = 1.0) {
  LmConfig c;
  c.order = order;
  c.smoothing = s;
  c.k = k;
  return c;
}

std::int32_t id(const NgramLM& lm, const std::string& t) { return lm.vocabulary().id(t); }

double prob(const NgramLM& lm, std::vector<std::int32_t> history, std::int32_t w) { return lm.probability(history, w); }

}  // namespace

TEST(NgramLM, RepeatedBigramIsCertain) {
  const std::vector<TokenSeq> corpus(4, TokenSeq{"a", "b"});
  const NgramLM lm = train_lm(corpus, config(2, Smoothing::none));
  EXPECT_EQ(prob(lm, {id(lm, "a")}, id(lm, "b")), 1.0);
  EXPECT_EQ(prob(lm, {id(lm, "b")}, lm.end_id()), 1.0);
  EXPECT_EQ(prob(lm, {lm.start_id()}, id(lm, "a")), 1.0);
}

TEST(NgramLM, AddOneBigramTable) {
  // Closed set {<unk>, a, b, c, </s>}: |V| = 5.
  const std::vector<TokenSeq> corpus{{"a", "b"}, {"a", "c"}, {"b", "c"}};
  const NgramLM lm = train_lm(corpus, config(2, Smoothing::add_k, 1.0));
  ASSERT_EQ(lm.predicted_size(), 5u);
  const auto s = lm.start_id(), e = lm.end_id(), unk = id(lm, "<unk>");
  const auto a = id(lm, "a"), b = id(lm, "b"), c = id(lm, "c");
  struct Row {
    std::int32_t h;
    std::vector<std::pair<std::int32_t, double>> p;
  };
  const std::vector<Row> table{
      {s, {{a, 3.0 / 8}, {b, 2.0 / 8}, {c, 1.0 / 8}, {e, 1.0 / 8}, {unk, 1.0 / 8}}},
      {a, {{a, 1.0 / 7}, {b, 2.0 / 7}, {c, 2.0 / 7}, {e, 1.0 / 7}, {unk, 1.0 / 7}}},
      {b, {{a, 1.0 / 7}, {b, 1.0 / 7}, {c, 2.0 / 7}, {e, 2.0 / 7}, {unk, 1.0 / 7}}},
      {c, {{a, 1.0 / 7}, {b, 1.0 / 7}, {c, 1.0 / 7}, {e, 3.0 / 7}, {unk, 1.0 / 7}}},
      {unk, {{a, 1.0 / 5}, {b, 1.0 / 5}, {c, 1.0 / 5}, {e, 1.0 / 5}, {unk, 1.0 / 5}}},
  };
  for (const auto& row : table)
    for (const auto& [w, p] : row.p) EXPECT_NEAR(prob(lm, {row.h}, w), p, 1e-15) << row.h << " -> " << w;
}

TEST(NgramLM, FiveSequencePerplexities) {
  const std::vector<TokenSeq> corpus{{"a", "b"}, {"a", "c"}, {"b", "c"}};
  const NgramLM lm = train_lm(corpus, config(2, Smoothing::add_k, 1.0));
  const std::vector<std::pair<TokenSeq, std::vector<double>>> cases{
      {{"a", "b"}, {3.0 / 8, 2.0 / 7, 2.0 / 7}},
      {{"a", "c"}, {3.0 / 8, 2.0 / 7, 3.0 / 7}},
      {{"b", "c"}, {2.0 / 8, 2.0 / 7, 3.0 / 7}},
      {{"c"}, {1.0 / 8, 3.0 / 7}},
      {{"zebra"}, {1.0 / 8, 1.0 / 5}},
  };
  SequenceScore total;
  double log_sum = 0;
  std::size_t tokens = 0;
  for (const auto& [seq, probs] : cases) {
    double product = 1;
    for (double p : probs) product *= p;
    const double expected = std::pow(product, -1.0 / static_cast<double>(probs.size()));
    EXPECT_NEAR(perplexity(lm, seq), expected, 1e-9);
    total += lm.score({}, seq);
    log_sum += std::log(product);
    tokens += probs.size();
  }
  EXPECT_EQ(total.tokens, tokens);
  EXPECT_NEAR(perplexity(total), std::exp(-log_sum / static_cast<double>(tokens)), 1e-9);
}

TEST(NgramLM, ContextIsFedButNotScored) {
  const std::vector<TokenSeq> corpus{{"a", "b"}, {"a", "c"}, {"b", "c"}};
  const NgramLM lm = train_lm(corpus, config(2, Smoothing::add_k, 1.0));
  const SequenceScore s = lm.score({"a"}, {"b"});
  EXPECT_EQ(s.tokens, 2u);
  EXPECT_NEAR(s.log_prob, std::log(2.0 / 7) + std::log(2.0 / 7), 1e-12);
}

TEST(NgramLM, InterpolatedUnigramClosedForm) {
  // P(w) = (c(w) + k|V| / |V|) / (N + k|V|)
  const std::vector<TokenSeq> corpus{{"x", "x", "y"}};
  const double k = 0.5;
  const NgramLM lm = train_lm(corpus, config(1, Smoothing::interpolated, k));
  const double v = 4, n = 4;  // {<unk>, x, y, </s>}, 3 tokens + </s>
  EXPECT_NEAR(prob(lm, {}, id(lm, "x")), (2 + k) / (n + k * v), 1e-15);
  EXPECT_NEAR(prob(lm, {}, id(lm, "y")), (1 + k) / (n + k * v), 1e-15);
  EXPECT_NEAR(prob(lm, {}, id(lm, "<unk>")), k / (n + k * v), 1e-15);
}

TEST(NgramLM, DistributionsSumToOne) {
  const auto dialogs = tokenize_dialogs(synthetic_dialogs(40, 3));
  const auto corpus = lm_training_sequences(dialogs);
  Rng rng(11);
  for (Smoothing s : {Smoothing::none, Smoothing::add_k, Smoothing::interpolated}) {
    for (int order : {1, 2, 3}) {
      const NgramLM lm = train_lm(corpus, config(order, s, 0.01));
      const auto symbols = static_cast<std::uint64_t>(lm.predicted_size() + 1);  // include <s>
      for (int t = 0; t < 200; ++t) {
        std::vector<std::int32_t> history;
        const auto len = rng.below(4);
        for (std::uint64_t i = 0; i < len; ++i) history.push_back(static_cast<std::int32_t>(rng.below(symbols)));
        const auto dist = lm.distribution(history);
        const double sum = std::accumulate(dist.begin(), dist.end(), 0.0);
        EXPECT_NEAR(sum, 1.0, 1e-9);
      }
    }
  }
}

TEST(NgramLM, DeterministicCorpusHasPerplexityOne) {
  const TokenSeq seq{"the", "cat", "sat", "on", "a", "mat"};
  const std::vector<TokenSeq> corpus(3, seq);
  for (int order : {2, 3}) {
    const NgramLM lm = train_lm(corpus, config(order, Smoothing::none));
    EXPECT_NEAR(perplexity(lm, seq), 1.0, 1e-12);
  }
}

TEST(NgramLM, UniformUnigramPerplexityIsVocabularySize) {
  // 49 distinct tokens plus </s>, each seen once.
  TokenSeq all;
  for (int i = 0; i < 49; ++i) all.push_back("w" + std::to_string(i));
  const std::vector<TokenSeq> corpus{all};
  const NgramLM lm = train_lm(corpus, config(1, Smoothing::none));
  EXPECT_NEAR(perplexity(lm, all), 50.0, 1e-9);
  EXPECT_NEAR(perplexity(lm, TokenSeq{"w3", "w3", "w40"}), 50.0, 1e-9);
}

TEST(NgramLM, SmoothingNeverLowersTrainingPerplexity) {
  const auto dialogs = tokenize_dialogs(synthetic_dialogs(30, 8));
  const auto corpus = lm_training_sequences(dialogs);
  for (int order : {1, 2, 3}) {
    const NgramLM mle = train_lm(corpus, config(order, Smoothing::none));
    for (double k : {0.01, 0.1, 1.0}) {
      const NgramLM smooth = train_lm(corpus, config(order, Smoothing::add_k, k));
      SequenceScore a, b;
      for (const auto& seq : corpus) {
        a += mle.score({}, seq);
        b += smooth.score({}, seq);
      }
      EXPECT_LE(perplexity(a), perplexity(b) * (1 + 1e-12)) << order << " " << k;
    }
  }
}

TEST(NgramLM, MinCountMapsRareTokensToUnknown) {
  const std::vector<TokenSeq> corpus{{"a", "a", "rare"}, {"a"}};
  LmConfig c = config(1, Smoothing::add_k, 1.0);
  c.min_count = 2;
  const NgramLM lm = train_lm(corpus, c);
  EXPECT_EQ(lm.predicted_size(), 3u);  // <unk>, a, </s>
  EXPECT_EQ(id(lm, "rare"), id(lm, "<unk>"));
}

TEST(NgramLM, Errors) {
  EXPECT_THROW(train_lm({}, config(2, Smoothing::add_k)), Error);
  const std::vector<TokenSeq> corpus{{"a"}};
  EXPECT_THROW(train_lm(corpus, config(0, Smoothing::add_k)), Error);
  EXPECT_THROW(train_lm(corpus, config(2, Smoothing::add_k, 0.0)), Error);
  try {
    train_lm({}, config(2, Smoothing::none));
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyCorpus);
  }
}

TEST(LmSequences, ConditioningLayout) {
  TokenizedDialog d;
  d.caption = {"a", "dog"};
  for (std::size_t r = 0; r < kRoundsPerDialog; ++r) {
    d.questions[r] = {"q" + std::to_string(r)};
    d.answers[r] = {"a" + std::to_string(r)};
  }
  const std::vector<TokenizedDialog> ds{d};
  const auto seqs = lm_training_sequences(ds);
  ASSERT_EQ(seqs.size(), 10u);
  EXPECT_EQ(seqs[0], (TokenSeq{"a", "dog", "<sep>", "q0"}));
  EXPECT_EQ(seqs[1], (TokenSeq{"q0", "a0", "<sep>", "q1"}));
  EXPECT_EQ(seqs[9], (TokenSeq{"q8", "a8", "<sep>", "q9"}));

  const RoundOrder reversed{9, 8, 7, 6, 5, 4, 3, 2, 1, 0};
  const auto cq = conditioned_questions(d, reversed);
  EXPECT_EQ(cq[0].context, (TokenSeq{"a", "dog", "<sep>"}));
  EXPECT_EQ(*cq[0].target, TokenSeq{"q9"});
  EXPECT_EQ(cq[1].context, (TokenSeq{"q9", "a9", "<sep>"}));
  EXPECT_EQ(*cq[1].target, TokenSeq{"q8"});
}

namespace {

// Questions and answers carry their round number, so order is fully observable.
std::vector<TokenizedDialog> round_indexed_corpus(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TokenizedDialog> out(n);
  for (auto& d : out) {
    d.caption = {"caption", "c" + std::to_string(rng.below(5))};
    for (std::size_t r = 0; r < kRoundsPerDialog; ++r) {
      d.questions[r] = {"question" + std::to_string(r), "w" + std::to_string(rng.below(3))};
      d.answers[r] = {"answer" + std::to_string(r)};
    }
  }
  return out;
}

}  // namespace

TEST(ShuffleClassification, IdentityPermutationTies) {
  const auto dialogs = round_indexed_corpus(20, 1);
  const NgramLM lm = train_lm(lm_training_sequences(dialogs), config(3, Smoothing::interpolated, 0.01));
  const auto r = shuffle_classification(lm, dialogs, 5, [](std::size_t, int) { return kIdentityOrder; });
  EXPECT_EQ(r.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(r.ppl_shuffled.mean, r.ppl_original);
  EXPECT_EQ(r.shuffled_higher_fraction, 0.0);
  EXPECT_EQ(r.pairs, 100u);
}

TEST(ShuffleClassification, RoundIndexedCorpusIsSeparable) {
  const auto dialogs = round_indexed_corpus(100, 2);
  const NgramLM lm = train_lm(lm_training_sequences(dialogs), config(3, Smoothing::interpolated, 0.01));
  const auto r = shuffle_classification(lm, dialogs, 100, std::uint64_t{7});
  EXPECT_GT(r.accuracy, 0.9);
  EXPECT_GE(r.shuffled_higher_fraction, 0.95);
  EXPECT_GT(r.ppl_shuffled.mean, r.ppl_original);
  EXPECT_EQ(r.permutations, 100);
}

TEST(ShuffleClassification, UnigramModelIsOrderBlind) {
  const auto dialogs = round_indexed_corpus(10, 3);
  const NgramLM lm = train_lm(lm_training_sequences(dialogs), config(1, Smoothing::interpolated, 0.01));
  const auto r = shuffle_classification(lm, dialogs, 1000, std::uint64_t{5});
  EXPECT_LE(std::abs(r.accuracy - 0.5), 3 * r.accuracy_sd + 1e-12);
}

TEST(ShuffleClassification, SeededAndWorkerIndependent) {
  const auto dialogs = tokenize_dialogs(synthetic_dialogs(30, 4));
  const NgramLM lm = train_lm(lm_training_sequences(dialogs), config(3, Smoothing::interpolated, 0.01));
  const auto a = shuffle_classification(lm, dialogs, 20, std::uint64_t{9}, 1);
  const auto b = shuffle_classification(lm, dialogs, 20, std::uint64_t{9}, 6);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.ppl_shuffled.mean, b.ppl_shuffled.mean);
  EXPECT_EQ(a.ppl_original, b.ppl_original);
}

TEST(ShuffleClassification, Errors) {
  const auto dialogs = round_indexed_corpus(2, 1);
  const NgramLM lm = train_lm(lm_training_sequences(dialogs), config(2, Smoothing::add_k, 1.0));
  EXPECT_THROW(shuffle_classification(lm, {}, 3, std::uint64_t{1}), Error);
  EXPECT_THROW(shuffle_classification(lm, dialogs, 0, std::uint64_t{1}), Error);
}
