#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace visdial {

/// Lowercase word tokens produced by preprocess_text.
using TokenSeq = std::vector<std::string>;

/// Tokenizer used for every question, answer and caption:
///   lowercase -> contraction expansion -> every character that is not
///   [a-z0-9'] becomes a space -> standalone integers spelled out ->
///   whitespace split.
/// Leading/trailing apostrophes are stripped from tokens. Mixed tokens such
/// as "2nd" keep their digits.
TokenSeq preprocess_text(std::string_view raw);

/// Space-joined tokens; the canonical key for answer identity.
std::string join_tokens(const TokenSeq& tokens);

/// preprocess_text followed by join_tokens.
std::string normalize_text(std::string_view raw);

/// English words for a non-negative integer ("twenty one", "one hundred five").
std::vector<std::string> number_to_words(unsigned long long value);

/// The fixed contraction table (contraction -> expansion).
const std::vector<std::pair<std::string_view, std::string_view>>& contraction_table();

}  // namespace visdial
