#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "support/synthetic.hpp"
#include "visdial/embeddings.hpp"
#include "visdial/error.hpp"

using namespace visdial;

namespace {

EmbeddingTable toy_table() {
  EmbeddingTable t(2);
  t.set("a", {1, 2});
  t.set("b", {3, 4});
  t.set("c", {5, 6});
  t.set("d", {7, 8});
  t.set("e", {-1, 10});
  return t;
}

std::vector<Neighbor> brute_force(std::span<const float> q, const std::vector<std::pair<ItemId, std::vector<float>>>& rows,
                                  std::size_t k) {
  std::vector<Neighbor> all;
  for (const auto& [id, row] : rows) {
    double s = 0;
    for (std::size_t i = 0; i < row.size(); ++i) {
      const double d = static_cast<double>(q[i]) - static_cast<double>(row[i]);
      s += d * d;
    }
    all.push_back({id, std::sqrt(s)});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  });
  all.resize(k);
  return all;
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::Io;
}

}  // namespace

TEST(LoadEmbeddings, ThreeLines) {
  std::istringstream in("x 1 2\ny 3 4\nz -0.5 1e-3\n");
  auto t = load_embedding_table(in, 2);
  EXPECT_EQ(t.size(), 3u);
  EXPECT_EQ(t.dim(), 2u);
  EXPECT_EQ(*t.find("z"), (std::vector<float>{-0.5f, 1e-3f}));
}

TEST(LoadEmbeddings, DimensionMismatchNamesLine) {
  std::istringstream in("x 1 2\ny 1 2 3\n");
  try {
    load_embedding_table(in, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DimensionMismatch);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(LoadEmbeddings, MalformedLines) {
  std::istringstream bad_float("x 1 zz\n");
  EXPECT_EQ(code_of([&] { load_embedding_table(bad_float, 2); }), Errc::MalformedLine);
  std::istringstream no_values("lonely\n");
  EXPECT_EQ(code_of([&] { load_embedding_table(no_values, 0); }), Errc::MalformedLine);
}

TEST(LoadEmbeddings, LastDuplicateWins) {
  std::istringstream in("x 1 2\nx 5 6\n");
  auto t = load_embedding_table(in, 2);
  EXPECT_EQ(t.size(), 1u);
  EXPECT_EQ(*t.find("x"), (std::vector<float>{5, 6}));
}

TEST(LoadEmbeddings, FileRoundTrip) {
  Rng rng(8);
  std::vector<std::pair<std::string, std::vector<float>>> rows;
  std::ostringstream file;
  file.precision(9);
  for (int i = 0; i < 100; ++i) {
    std::vector<float> v(7);
    for (auto& x : v) x = static_cast<float>(rng.uniform() * 20 - 10);
    file << "tok" << i;
    for (float x : v) file << ' ' << x;
    file << '\n';
    rows.emplace_back("tok" + std::to_string(i), v);
  }
  std::istringstream in(file.str());
  auto t = load_embedding_table(in, 0);
  EXPECT_EQ(t.dim(), 7u);
  ASSERT_EQ(t.size(), 100u);
  for (const auto& [tok, v] : rows) EXPECT_EQ(*t.find(tok), v) << tok;
}

TEST(EmbedQuestion, ThreeTokensThenZeros) {
  auto t = toy_table();
  auto q = embed_question({"a", "b", "c"}, t);
  EXPECT_EQ(q.vec, (std::vector<float>{1, 2, 3, 4, 5, 6, 0, 0}));
}

TEST(EmbedQuestion, EmptyIsZero) {
  auto q = embed_question({}, toy_table());
  EXPECT_EQ(q.vec, std::vector<float>(8, 0.0f));
}

TEST(EmbedQuestion, FiveTokensHandComputed) {
  auto q = embed_question({"a", "b", "c", "d", "e"}, toy_table());
  // remainder mean: ((7 + -1) / 2, (8 + 10) / 2) = (3, 9)
  EXPECT_EQ(q.vec, (std::vector<float>{1, 2, 3, 4, 5, 6, 3, 9}));
}

TEST(EmbedQuestion, OovAndShortQuestions) {
  auto t = toy_table();
  EXPECT_EQ(embed_question({"zzz", "b"}, t).vec, (std::vector<float>{0, 0, 3, 4, 0, 0, 0, 0}));
  // OOV tokens in the remainder count as zero vectors in the mean.
  EXPECT_EQ(embed_question({"a", "a", "a", "d", "zzz"}, t).vec, (std::vector<float>{1, 2, 1, 2, 1, 2, 3.5, 4}));
  for (std::size_t n = 0; n < 12; ++n) EXPECT_EQ(embed_question(TokenSeq(n, "c"), t).vec.size(), 8u);
}

TEST(EmbedAnswerMean, Cases) {
  auto t = toy_table();
  EXPECT_EQ(embed_answer_mean({"b"}, t), (std::vector<double>{3, 4}));
  EXPECT_EQ(embed_answer_mean({}, t), (std::vector<double>{0, 0}));
  // (1+3+5+7)/4 = 4, (2+4+6+8)/4 = 5
  EXPECT_EQ(embed_answer_mean({"a", "b", "c", "d"}, t), (std::vector<double>{4, 5}));
}

TEST(Knn, ExactMatchFirst) {
  NeighborIndex idx(2);
  idx.add(10, std::vector<float>{0, 0});
  idx.add(11, std::vector<float>{1, 1});
  idx.add(12, std::vector<float>{5, 5});
  std::vector<float> q = {1, 1};
  auto r = knn(q, idx, 1);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].id, 11);
  EXPECT_EQ(r[0].distance, 0.0);
}

TEST(Knn, AllIdsSortedWithIdTieBreak) {
  NeighborIndex idx(1);
  idx.add(5, std::vector<float>{1});
  idx.add(3, std::vector<float>{-1});
  idx.add(9, std::vector<float>{2});
  idx.add(1, std::vector<float>{1});
  std::vector<float> q = {0};
  auto r = knn(q, idx, 4);
  std::vector<ItemId> ids;
  for (auto& n : r) ids.push_back(n.id);
  EXPECT_EQ(ids, (std::vector<ItemId>{1, 3, 5, 9}));
}

TEST(Knn, Errors) {
  NeighborIndex empty(2);
  std::vector<float> q = {0, 0};
  EXPECT_EQ(code_of([&] { knn(q, empty, 1); }), Errc::InvalidArgument);
  NeighborIndex idx(2);
  idx.add(1, q);
  EXPECT_EQ(code_of([&] { knn(q, idx, 2); }), Errc::KTooLarge);
  EXPECT_EQ(code_of([&] { knn(q, idx, 0); }), Errc::InvalidArgument);
  std::vector<float> wrong = {0, 0, 0};
  EXPECT_EQ(code_of([&] { knn(wrong, idx, 1); }), Errc::DimensionMismatch);
  EXPECT_THROW(idx.add(1, q), Error);
}

TEST(Knn, MatchesBruteForceScan) {
  Rng rng(21);
  std::vector<std::pair<ItemId, std::vector<float>>> rows;
  NeighborIndex idx(12);
  for (ItemId id = 0; id < 500; ++id) {
    std::vector<float> v(12);
    // Coarse grid values create many exact distance ties.
    for (auto& x : v) x = static_cast<float>(rng.below(3));
    rows.emplace_back(id * 7 % 500, v);
    idx.add(id * 7 % 500, v);
  }
  for (int qi = 0; qi < 50; ++qi) {
    std::vector<float> q(12);
    for (auto& x : q) x = static_cast<float>(rng.below(3));
    EXPECT_EQ(knn(q, idx, 20), brute_force(q, rows, 20));
  }
}

TEST(Knn, PermutationAndTranslationInvariant) {
  Rng rng(4);
  std::vector<std::pair<ItemId, std::vector<float>>> rows;
  for (ItemId id = 0; id < 200; ++id) {
    std::vector<float> v(4);
    for (auto& x : v) x = static_cast<float>(rng.below(5));
    rows.emplace_back(id, v);
  }
  NeighborIndex forward(4), reversed(4), shifted(4);
  for (const auto& [id, v] : rows) forward.add(id, v);
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) reversed.add(it->first, it->second);
  // Small integer offsets keep float arithmetic exact.
  const std::vector<float> c = {3, -2, 7, 1};
  for (const auto& [id, v] : rows) {
    std::vector<float> s(v);
    for (std::size_t i = 0; i < 4; ++i) s[i] += c[i];
    shifted.add(id, s);
  }
  for (int qi = 0; qi < 30; ++qi) {
    std::vector<float> q(4);
    for (auto& x : q) x = static_cast<float>(rng.below(5));
    std::vector<float> qs(q);
    for (std::size_t i = 0; i < 4; ++i) qs[i] += c[i];
    auto a = knn(q, forward, 15);
    EXPECT_EQ(a, knn(q, reversed, 15));
    EXPECT_EQ(a, knn(qs, shifted, 15));
    for (std::size_t i = 1; i < a.size(); ++i) EXPECT_LE(a[i - 1].distance, a[i].distance);
  }
}

TEST(Knn, BatchIndependentOfWorkers) {
  Rng rng(5);
  NeighborIndex idx(8);
  for (ItemId id = 0; id < 300; ++id) {
    std::vector<float> v(8);
    for (auto& x : v) x = static_cast<float>(rng.uniform());
    idx.add(id, v);
  }
  std::vector<QuestionEmbedding> queries(64);
  for (auto& q : queries) {
    q.vec.resize(8);
    for (auto& x : q.vec) x = static_cast<float>(rng.uniform());
  }
  auto one = knn_batch(queries, idx, 10, 1);
  auto many = knn_batch(queries, idx, 10, 8);
  EXPECT_EQ(one, many);
  for (std::size_t i = 0; i < queries.size(); ++i) EXPECT_EQ(one[i], knn(queries[i], idx, 10));
}
