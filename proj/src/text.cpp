#include "visdial/text.hpp"

#include <algorithm>
#include <array>
#include <unordered_map>

namespace visdial {

namespace {

const std::vector<std::pair<std::string_view, std::string_view>> kContractions = {
    {"ain't", "is not"},      {"aren't", "are not"},     {"can't", "can not"},
    {"couldn't", "could not"}, {"didn't", "did not"},     {"doesn't", "does not"},
    {"don't", "do not"},      {"hadn't", "had not"},     {"hasn't", "has not"},
    {"haven't", "have not"},  {"isn't", "is not"},       {"mustn't", "must not"},
    {"needn't", "need not"},  {"shouldn't", "should not"}, {"wasn't", "was not"},
    {"weren't", "were not"},  {"won't", "will not"},     {"wouldn't", "would not"},
    {"i'm", "i am"},          {"you're", "you are"},     {"we're", "we are"},
    {"they're", "they are"},  {"he's", "he is"},         {"she's", "she is"},
    {"it's", "it is"},        {"that's", "that is"},     {"there's", "there is"},
    {"here's", "here is"},    {"what's", "what is"},     {"where's", "where is"},
    {"who's", "who is"},      {"how's", "how is"},       {"let's", "let us"},
    {"i've", "i have"},       {"you've", "you have"},    {"we've", "we have"},
    {"they've", "they have"}, {"could've", "could have"}, {"would've", "would have"},
    {"should've", "should have"}, {"i'll", "i will"},    {"you'll", "you will"},
    {"he'll", "he will"},     {"she'll", "she will"},    {"it'll", "it will"},
    {"we'll", "we will"},     {"they'll", "they will"},  {"that'll", "that will"},
    {"i'd", "i would"},       {"you'd", "you would"},    {"he'd", "he would"},
    {"she'd", "she would"},   {"we'd", "we would"},      {"they'd", "they would"},
    {"there're", "there are"}, {"what're", "what are"},
};

const std::unordered_map<std::string_view, std::string_view>& contraction_index() {
  static const auto index = [] {
    std::unordered_map<std::string_view, std::string_view> m;
    for (const auto& [k, v] : kContractions) m.emplace(k, v);
    return m;
  }();
  return index;
}

constexpr std::array<std::string_view, 20> kOnes = {
    "zero",    "one",     "two",       "three",    "four",     "five",    "six",
    "seven",   "eight",   "nine",      "ten",      "eleven",   "twelve",  "thirteen",
    "fourteen", "fifteen", "sixteen",  "seventeen", "eighteen", "nineteen"};
constexpr std::array<std::string_view, 10> kTens = {"",      "",      "twenty",  "thirty", "forty",
                                                     "fifty", "sixty", "seventy", "eighty", "ninety"};
constexpr std::array<std::string_view, 7> kScales = {"",            "thousand",    "million",    "billion",
                                                     "trillion",    "quadrillion", "quintillion"};

void below_thousand(unsigned v, std::vector<std::string>& out) {
  if (v >= 100) {
    out.emplace_back(kOnes[v / 100]);
    out.emplace_back("hundred");
    v %= 100;
    if (v == 0) return;
  }
  if (v < 20) {
    out.emplace_back(kOnes[v]);
  } else {
    out.emplace_back(kTens[v / 10]);
    if (v % 10 != 0) out.emplace_back(kOnes[v % 10]);
  }
}

bool is_word_char(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\''; }

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

const std::vector<std::pair<std::string_view, std::string_view>>& contraction_table() { return kContractions; }

std::vector<std::string> number_to_words(unsigned long long value) {
  std::vector<std::string> out;
  if (value == 0) {
    out.emplace_back("zero");
    return out;
  }
  std::vector<unsigned> groups;
  while (value > 0) {
    groups.push_back(static_cast<unsigned>(value % 1000));
    value /= 1000;
  }
  for (std::size_t i = groups.size(); i-- > 0;) {
    if (groups[i] == 0) continue;
    below_thousand(groups[i], out);
    if (i > 0) out.emplace_back(kScales[i]);
  }
  return out;
}

TokenSeq preprocess_text(std::string_view raw) {
  // Lowercase ASCII and fold the typographic apostrophe (U+2019) to '\''.
  std::string text;
  text.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto c = static_cast<unsigned char>(raw[i]);
    if (c == 0xE2 && i + 2 < raw.size() && static_cast<unsigned char>(raw[i + 1]) == 0x80 &&
        static_cast<unsigned char>(raw[i + 2]) == 0x99) {
      text.push_back('\'');
      i += 2;
      continue;
    }
    text.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
  }

  // Contractions are matched on maximal [a-z0-9'] runs, then everything
  // outside that class becomes a separator.
  std::string spaced;
  spaced.reserve(text.size() + 16);
  const auto& table = contraction_index();
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_char(static_cast<unsigned char>(text[i]))) {
      spaced.push_back(' ');
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_word_char(static_cast<unsigned char>(text[j]))) ++j;
    std::string_view word(text.data() + i, j - i);
    while (!word.empty() && word.front() == '\'') word.remove_prefix(1);
    while (!word.empty() && word.back() == '\'') word.remove_suffix(1);
    if (auto it = table.find(word); it != table.end()) {
      spaced.append(it->second);
    } else {
      spaced.append(word);
    }
    spaced.push_back(' ');
    i = j;
  }

  TokenSeq tokens;
  std::size_t p = 0;
  while (p < spaced.size()) {
    while (p < spaced.size() && spaced[p] == ' ') ++p;
    std::size_t q = p;
    while (q < spaced.size() && spaced[q] != ' ') ++q;
    std::string_view tok(spaced.data() + p, q - p);
    p = q;
    while (!tok.empty() && tok.front() == '\'') tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == '\'') tok.remove_suffix(1);
    if (tok.empty()) continue;
    if (all_digits(tok)) {
      std::string_view digits = tok;
      while (digits.size() > 1 && digits.front() == '0') digits.remove_prefix(1);
      if (digits.size() <= 18) {
        for (auto& w : number_to_words(std::stoull(std::string(digits)))) tokens.push_back(std::move(w));
      } else {
        for (char d : digits) tokens.emplace_back(kOnes[static_cast<unsigned>(d - '0')]);
      }
      continue;
    }
    tokens.emplace_back(tok);
  }
  return tokens;
}

std::string join_tokens(const TokenSeq& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

std::string normalize_text(std::string_view raw) { return join_tokens(preprocess_text(raw)); }

}  // namespace visdial
