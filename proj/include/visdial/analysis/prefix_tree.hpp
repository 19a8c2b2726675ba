#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "visdial/dialog.hpp"

namespace visdial {

enum class Side { question, answer };

/// Trie over the leading tokens of questions or answers. The root has an
/// empty token and counts every sequence; a child never counts more than
/// its parent.
struct PrefixNode {
  std::string token;
  std::uint64_t count = 0;
  std::map<std::string, std::unique_ptr<PrefixNode>> children;

  const PrefixNode* child(const std::string& t) const {
    auto it = children.find(t);
    return it == children.end() ? nullptr : it->second.get();
  }
};

/// Throws InvalidArgument when depth < 1.
PrefixNode ngram_prefix_tree(std::span<const Dialog> dialogs, Side side, int depth = 4);

/// Nested {"token", "count", "children"}; children sorted by count desc then
/// token, subtrees below `min_count` dropped.
nlohmann::ordered_json prefix_tree_to_json(const PrefixNode& node, std::uint64_t min_count = 1);

}  // namespace visdial
