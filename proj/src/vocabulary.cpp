#include "visdial/vocabulary.hpp"

#include <algorithm>

#include "visdial/error.hpp"

namespace visdial {

std::int32_t Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? unk_id() : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

std::vector<std::int32_t> Vocabulary::encode(const TokenSeq& seq) const {
  std::vector<std::int32_t> out;
  out.reserve(seq.size());
  for (const auto& t : seq) out.push_back(id(t));
  return out;
}

Vocabulary build_vocabulary(std::span<const TokenSeq> corpus, int min_count) {
  if (min_count < 1) throw Error(Errc::InvalidArgument, "min_count must be >= 1");
  std::unordered_map<std::string, std::int64_t> freq;
  std::size_t total = 0;
  for (const auto& seq : corpus) {
    for (const auto& t : seq) ++freq[t];
    total += seq.size();
  }
  if (total == 0) throw Error(Errc::EmptyCorpus, "corpus contains no tokens");

  std::vector<std::pair<std::string, std::int64_t>> kept;
  for (auto& [tok, n] : freq)
    if (n >= min_count) kept.emplace_back(tok, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });

  Vocabulary v;
  v.min_count_ = min_count;
  v.tokens_.reserve(kept.size() + 1);
  v.tokens_.emplace_back(kUnkToken);
  v.ids_.emplace(std::string(kUnkToken), 0);
  for (auto& [tok, n] : kept) {
    v.ids_.emplace(tok, static_cast<std::int32_t>(v.tokens_.size()));
    v.tokens_.push_back(std::move(tok));
  }
  return v;
}

}  // namespace visdial
