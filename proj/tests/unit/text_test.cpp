#include <gtest/gtest.h>

#include "followup/text.hpp"

using namespace followup;

TEST(Text, WordsAndContentWords) {
  EXPECT_EQ(text::words("Hello, World! 42x"), (std::vector<std::string>{"hello", "world", "42x"}));
  EXPECT_EQ(text::content_words("The pains and the pain"), (std::set<std::string>{text::stem("pain")}));
  EXPECT_EQ(text::stem("smoking"), text::stem("smoke"));
}

TEST(Text, PhrasesRespectWordBoundaries) {
  EXPECT_TRUE(text::contains_phrase("I have Chest Tightness often", "chest tightness"));
  EXPECT_FALSE(text::contains_phrase("noted", "no"));
  EXPECT_EQ(text::find_phrase("no, not now", "not"), 4u);
}

TEST(Text, SentencesKeepDecimals) {
  EXPECT_EQ(text::sentences("I weigh 70.5 kg. Yes! Really?"),
            (std::vector<std::string>{"I weigh 70.5 kg.", "Yes!", "Really?"}));
}

TEST(Text, TokenEstimateIsCeilQuarter) {
  EXPECT_EQ(text::estimate_tokens(""), 0);
  EXPECT_EQ(text::estimate_tokens("abcd"), 1);
  EXPECT_EQ(text::estimate_tokens("abcde"), 2);
}

TEST(Text, CasefoldIsAsciiOnly) { EXPECT_EQ(text::casefold("ÄbC"), "Äbc"); }
