#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "visdial/text.hpp"

namespace visdial {

inline constexpr std::string_view kUnkToken = "<unk>";

/// Token -> dense id map. The UNK entry always has id 0; remaining ids follow
/// descending corpus frequency, ties broken lexicographically.
class Vocabulary {
 public:
  std::size_t size() const noexcept { return tokens_.size(); }
  int min_count() const noexcept { return min_count_; }
  std::int32_t unk_id() const noexcept { return 0; }

  /// Id of `token`, or unk_id() when absent.
  std::int32_t id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::vector<std::int32_t> encode(const TokenSeq& seq) const;

 private:
  friend Vocabulary build_vocabulary(std::span<const TokenSeq> corpus, int min_count);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> ids_;
  int min_count_ = 1;
};

/// Keeps exactly the tokens whose corpus frequency is >= min_count, plus UNK.
/// Throws EmptyCorpus when the corpus holds no tokens, InvalidArgument when
/// min_count < 1.
Vocabulary build_vocabulary(std::span<const TokenSeq> corpus, int min_count = 5);

}  // namespace visdial
