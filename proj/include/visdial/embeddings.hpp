#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "visdial/text.hpp"

namespace visdial {

/// Word vectors of a single dimensionality.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return vectors_.size(); }

  /// Inserts or replaces; throws DimensionMismatch on a wrong-length vector.
  void set(std::string token, std::vector<float> vec);
  /// nullptr when the token is absent.
  const std::vector<float>* find(std::string_view token) const;

 private:
  std::size_t dim_;
  std::unordered_map<std::string, std::vector<float>> vectors_;
};

/// Reads the text vector format (`token f1 ... fd` per line). expected_dim 0
/// takes the dimensionality from the first line. Later duplicates win.
EmbeddingTable load_embedding_table(std::istream& in, std::size_t expected_dim);

/// [v(t1); v(t2); v(t3); mean(v(t4..tn))] with zero vectors for missing
/// slots and out-of-table tokens. Always 4*dim long.
struct QuestionEmbedding {
  std::vector<float> vec;
};

QuestionEmbedding embed_question(const TokenSeq& tokens, const EmbeddingTable& table);

/// Mean token vector (zero for OOV tokens); zero vector for empty input.
std::vector<double> embed_answer_mean(const TokenSeq& tokens, const EmbeddingTable& table);

using ItemId = std::int64_t;

struct Neighbor {
  ItemId id;
  double distance;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Dense row-major matrix of embeddings keyed by unique ids, searched exactly.
class NeighborIndex {
 public:
  explicit NeighborIndex(std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  /// Throws InvalidArgument on duplicate id, DimensionMismatch on wrong length.
  void add(ItemId id, std::span<const float> row);

  std::span<const ItemId> ids() const noexcept { return ids_; }
  std::span<const float> row(std::size_t i) const noexcept { return {matrix_.data() + i * dim_, dim_}; }
  /// Row position of `id`, or size() when absent.
  std::size_t position(ItemId id) const;

 private:
  std::size_t dim_;
  std::vector<ItemId> ids_;
  std::vector<float> matrix_;
  std::unordered_map<ItemId, std::size_t> position_;
};

/// Squared Euclidean distance accumulated in double.
double squared_distance(std::span<const float> a, std::span<const float> b) noexcept;

/// The k nearest rows by Euclidean distance, ascending, ties by ascending id.
/// Exact scan. Throws KTooLarge when k > index size, InvalidArgument when
/// k < 1 or the index is empty.
std::vector<Neighbor> knn(std::span<const float> query, const NeighborIndex& index, std::size_t k);

inline std::vector<Neighbor> knn(const QuestionEmbedding& query, const NeighborIndex& index, std::size_t k) {
  return knn(std::span<const float>(query.vec), index, k);
}

/// One knn per query, parallel across queries; output order follows input.
std::vector<std::vector<Neighbor>> knn_batch(std::span<const QuestionEmbedding> queries, const NeighborIndex& index,
                                             std::size_t k, unsigned workers);

}  // namespace visdial
