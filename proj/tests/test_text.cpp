#include <gtest/gtest.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "support/synthetic.hpp"
#include "visdial/text.hpp"

using namespace visdial;

namespace {

TokenSeq split(const std::string& s) {
  TokenSeq out;
  std::istringstream in(s);
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

}  // namespace

TEST(Preprocess, DigitsBecomeWords) {
  EXPECT_EQ(preprocess_text("Is he wearing 2 hats?"), (TokenSeq{"is", "he", "wearing", "two", "hats"}));
}

TEST(Preprocess, ContractionExpands) { EXPECT_EQ(preprocess_text("don't"), (TokenSeq{"do", "not"})); }

TEST(Preprocess, EmptyInput) {
  EXPECT_TRUE(preprocess_text("").empty());
  EXPECT_TRUE(preprocess_text(" \t\n?!").empty());
}

TEST(Preprocess, HandTokenizedFixture) {
  std::ifstream in(std::string(VISDIAL_FIXTURES) + "/tokenizer_cases.json");
  ASSERT_TRUE(in);
  auto cases = nlohmann::json::parse(in);
  ASSERT_EQ(cases.size(), 50u);
  for (const auto& c : cases) {
    const std::string raw = c[0].get<std::string>();
    EXPECT_EQ(preprocess_text(raw), split(c[1].get<std::string>())) << "input: " << raw;
  }
}

TEST(Preprocess, OutputInvariants) {
  std::ifstream in(std::string(VISDIAL_FIXTURES) + "/tokenizer_cases.json");
  auto cases = nlohmann::json::parse(in);
  for (const auto& c : cases) {
    for (const auto& tok : preprocess_text(c[0].get<std::string>())) {
      EXPECT_FALSE(tok.empty());
      for (unsigned char ch : tok) EXPECT_FALSE(ch >= 'A' && ch <= 'Z') << tok;
      // Only mixed alphanumerics such as "2nd" keep digits.
      bool digit = false, alpha = false;
      for (unsigned char ch : tok) {
        digit |= ch >= '0' && ch <= '9';
        alpha |= ch >= 'a' && ch <= 'z';
      }
      if (digit) EXPECT_TRUE(alpha) << tok;
    }
  }
}

TEST(Preprocess, Idempotent) {
  std::ifstream in(std::string(VISDIAL_FIXTURES) + "/tokenizer_cases.json");
  auto cases = nlohmann::json::parse(in);
  std::vector<std::string> inputs;
  for (const auto& c : cases) inputs.push_back(c[0].get<std::string>());
  Rng rng(11);
  const std::string alphabet = "abcdeIT'0123456789 ,.?!-'\"";
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    const auto len = rng.below(24);
    for (std::size_t k = 0; k < len; ++k) s.push_back(alphabet[rng.below(alphabet.size())]);
    inputs.push_back(s);
  }
  for (const auto& [k, v] : contraction_table()) inputs.emplace_back(std::string(k) + "'");
  for (const auto& x : inputs) {
    const TokenSeq once = preprocess_text(x);
    EXPECT_EQ(preprocess_text(join_tokens(once)), once) << "input: " << x;
  }
}

TEST(Preprocess, ContractionTableExpandsEveryEntry) {
  for (const auto& [k, v] : contraction_table()) {
    EXPECT_EQ(join_tokens(preprocess_text(k)), v) << k;
    std::string upper(k);
    for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    EXPECT_EQ(join_tokens(preprocess_text(upper)), v) << upper;
  }
  EXPECT_GE(contraction_table().size(), 40u);
}

TEST(NumberToWords, SmallValues) {
  const char* expected[] = {"zero",     "one",      "two",     "three",    "four",     "five",     "six",
                            "seven",    "eight",    "nine",    "ten",      "eleven",   "twelve",   "thirteen",
                            "fourteen", "fifteen",  "sixteen", "seventeen", "eighteen", "nineteen"};
  for (unsigned v = 0; v < 20; ++v) EXPECT_EQ(join_tokens(number_to_words(v)), expected[v]);
  EXPECT_EQ(join_tokens(number_to_words(21)), "twenty one");
  EXPECT_EQ(join_tokens(number_to_words(70)), "seventy");
  EXPECT_EQ(join_tokens(number_to_words(305)), "three hundred five");
  EXPECT_EQ(join_tokens(number_to_words(1'000'001)), "one million one");
  EXPECT_EQ(join_tokens(number_to_words(12'345)), "twelve thousand three hundred forty five");
}

TEST(NumberToWords, EveryValueBelowHundredIsDigitFree) {
  for (unsigned v = 0; v < 100; ++v) {
    const auto words = preprocess_text(std::to_string(v));
    ASSERT_FALSE(words.empty());
    EXPECT_LE(words.size(), 2u);
    for (const auto& w : words)
      for (char ch : w) EXPECT_FALSE(ch >= '0' && ch <= '9');
  }
}

TEST(Preprocess, VeryLongDigitStringsAreSpelled) {
  EXPECT_EQ(join_tokens(preprocess_text("12345678901234567890")),
            "one two three four five six seven eight nine zero one two three four five six seven eight nine zero");
}

TEST(Normalize, JoinsTokens) { EXPECT_EQ(normalize_text("  Yes,  it's RED. "), "yes it is red"); }
