#include "visdial/analysis/prefix_tree.hpp"

#include <algorithm>
#include <vector>

#include "visdial/error.hpp"
#include "visdial/text.hpp"

namespace visdial {

PrefixNode ngram_prefix_tree(std::span<const Dialog> dialogs, Side side, int depth) {
  if (depth < 1) throw Error(Errc::InvalidArgument, "prefix depth must be >= 1");
  PrefixNode root;
  for (const auto& d : dialogs) {
    for (const auto& r : d.rounds) {
      const TokenSeq tokens = preprocess_text(side == Side::question ? r.question : r.answer);
      ++root.count;
      PrefixNode* node = &root;
      for (std::size_t i = 0; i < tokens.size() && i < static_cast<std::size_t>(depth); ++i) {
        auto& slot = node->children[tokens[i]];
        if (!slot) {
          slot = std::make_unique<PrefixNode>();
          slot->token = tokens[i];
        }
        node = slot.get();
        ++node->count;
      }
    }
  }
  return root;
}

nlohmann::ordered_json prefix_tree_to_json(const PrefixNode& node, std::uint64_t min_count) {
  nlohmann::ordered_json j;
  j["token"] = node.token;
  j["count"] = node.count;
  std::vector<const PrefixNode*> kids;
  for (const auto& [t, c] : node.children)
    if (c->count >= min_count) kids.push_back(c.get());
  std::stable_sort(kids.begin(), kids.end(), [](const PrefixNode* a, const PrefixNode* b) { return a->count > b->count; });
  auto arr = nlohmann::ordered_json::array();
  for (const auto* k : kids) arr.push_back(prefix_tree_to_json(*k, min_count));
  j["children"] = std::move(arr);
  return j;
}

}  // namespace visdial
