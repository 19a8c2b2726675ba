#include "visdial/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <optional>
#include <queue>
#include <sstream>

#include "visdial/error.hpp"
#include "visdial/parallel.hpp"

namespace visdial {

EmbeddingTable::EmbeddingTable(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw Error(Errc::InvalidArgument, "embedding dimension must be positive");
}

void EmbeddingTable::set(std::string token, std::vector<float> vec) {
  if (vec.size() != dim_)
    throw Error(Errc::DimensionMismatch, "token '" + token + "' has " + std::to_string(vec.size()) +
                                             " values, expected " + std::to_string(dim_));
  vectors_.insert_or_assign(std::move(token), std::move(vec));
}

const std::vector<float>* EmbeddingTable::find(std::string_view token) const {
  auto it = vectors_.find(std::string(token));
  return it == vectors_.end() ? nullptr : &it->second;
}

EmbeddingTable load_embedding_table(std::istream& in, std::size_t expected_dim) {
  std::optional<EmbeddingTable> table;
  if (expected_dim > 0) table.emplace(expected_dim);
  std::string line;
  std::size_t lineno = 0;
  std::vector<float> values;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(' ') == std::string::npos) continue;
    std::istringstream fields(line);
    std::string token;
    fields >> token;
    values.clear();
    std::string num;
    while (fields >> num) {
      float v = 0;
      auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
      if (ec != std::errc() || ptr != num.data() + num.size() || !std::isfinite(v))
        throw Error(Errc::MalformedLine, "line " + std::to_string(lineno) + ": bad number '" + num + "'");
      values.push_back(v);
    }
    if (values.empty()) throw Error(Errc::MalformedLine, "line " + std::to_string(lineno) + ": no vector values");
    if (!table) table.emplace(values.size());
    if (values.size() != table->dim())
      throw Error(Errc::DimensionMismatch, "line " + std::to_string(lineno) + ": " + std::to_string(values.size()) +
                                               " values, expected " + std::to_string(table->dim()));
    table->set(std::move(token), values);
  }
  if (!table) throw Error(Errc::MalformedInput, "embedding file is empty and no dimension was given");
  return std::move(*table);
}

QuestionEmbedding embed_question(const TokenSeq& tokens, const EmbeddingTable& table) {
  const std::size_t d = table.dim();
  QuestionEmbedding q;
  q.vec.assign(4 * d, 0.0f);
  for (std::size_t slot = 0; slot < 3 && slot < tokens.size(); ++slot) {
    if (const auto* v = table.find(tokens[slot])) std::copy(v->begin(), v->end(), q.vec.begin() + slot * d);
  }
  if (tokens.size() > 3) {
    std::vector<double> sum(d, 0.0);
    for (std::size_t i = 3; i < tokens.size(); ++i) {
      if (const auto* v = table.find(tokens[i]))
        for (std::size_t j = 0; j < d; ++j) sum[j] += (*v)[j];
    }
    const double n = static_cast<double>(tokens.size() - 3);
    for (std::size_t j = 0; j < d; ++j) q.vec[3 * d + j] = static_cast<float>(sum[j] / n);
  }
  return q;
}

std::vector<double> embed_answer_mean(const TokenSeq& tokens, const EmbeddingTable& table) {
  std::vector<double> mean(table.dim(), 0.0);
  if (tokens.empty()) return mean;
  for (const auto& t : tokens) {
    if (const auto* v = table.find(t))
      for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += (*v)[j];
  }
  for (auto& x : mean) x /= static_cast<double>(tokens.size());
  return mean;
}

NeighborIndex::NeighborIndex(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw Error(Errc::InvalidArgument, "index dimension must be positive");
}

void NeighborIndex::add(ItemId id, std::span<const float> row) {
  if (row.size() != dim_)
    throw Error(Errc::DimensionMismatch, "row for id " + std::to_string(id) + " has length " +
                                             std::to_string(row.size()) + ", expected " + std::to_string(dim_));
  if (!position_.emplace(id, ids_.size()).second)
    throw Error(Errc::InvalidArgument, "duplicate id " + std::to_string(id) + " in neighbor index");
  ids_.push_back(id);
  matrix_.insert(matrix_.end(), row.begin(), row.end());
}

std::size_t NeighborIndex::position(ItemId id) const {
  auto it = position_.find(id);
  return it == position_.end() ? ids_.size() : it->second;
}

double squared_distance(std::span<const float> a, std::span<const float> b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += diff * diff;
  }
  return s;
}

std::vector<Neighbor> knn(std::span<const float> query, const NeighborIndex& index, std::size_t k) {
  if (index.empty()) throw Error(Errc::InvalidArgument, "knn on an empty index");
  if (k < 1) throw Error(Errc::InvalidArgument, "k must be >= 1");
  if (k > index.size())
    throw Error(Errc::KTooLarge, "k=" + std::to_string(k) + " exceeds index size " + std::to_string(index.size()));
  if (query.size() != index.dim())
    throw Error(Errc::DimensionMismatch, "query length " + std::to_string(query.size()) + ", index dimension " +
                                             std::to_string(index.dim()));

  // Max-heap on (squared distance, id) keeps the k best seen so far.
  using Entry = std::pair<double, ItemId>;
  std::priority_queue<Entry> heap;
  const auto ids = index.ids();
  for (std::size_t i = 0; i < index.size(); ++i) {
    Entry e{squared_distance(query, index.row(i)), ids[i]};
    if (heap.size() < k) {
      heap.push(e);
    } else if (e < heap.top()) {
      heap.pop();
      heap.push(e);
    }
  }
  std::vector<Neighbor> out(heap.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = Neighbor{heap.top().second, std::sqrt(heap.top().first)};
    heap.pop();
  }
  return out;
}

std::vector<std::vector<Neighbor>> knn_batch(std::span<const QuestionEmbedding> queries, const NeighborIndex& index,
                                             std::size_t k, unsigned workers) {
  std::vector<std::vector<Neighbor>> out(queries.size());
  parallel_for(queries.size(), workers, [&](std::size_t i) { out[i] = knn(queries[i], index, k); });
  return out;
}

}  // namespace visdial
