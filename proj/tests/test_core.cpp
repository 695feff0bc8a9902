#include <set>

#include <gtest/gtest.h>

#include "rubble/core.hpp"

using namespace rubble;

TEST(Labels, FixedOrder) {
  ASSERT_EQ(kNumClasses, 5U);
  EXPECT_EQ(name_of(SoundClass::breathes), "breathes");
  EXPECT_EQ(name_of(SoundClass::cough), "cough");
  EXPECT_EQ(name_of(SoundClass::hello_help), "hello_help");
  EXPECT_EQ(name_of(SoundClass::muffled_words), "muffled_words");
  EXPECT_EQ(name_of(SoundClass::noise), "noise");
  for (std::size_t k = 0; k < kNumClasses; ++k) EXPECT_EQ(index_of(kAllClasses[k]), k);
}

TEST(Labels, SerialMonitorSpellings) {
  EXPECT_EQ(parse_class("breathes:"), SoundClass::breathes);
  EXPECT_EQ(parse_class("cough"), SoundClass::cough);
  EXPECT_EQ(parse_class("hello,help:"), SoundClass::hello_help);
  EXPECT_EQ(parse_class("hello-help"), SoundClass::hello_help);
  EXPECT_EQ(parse_class("muffled_words:"), SoundClass::muffled_words);
  EXPECT_EQ(parse_class("muffled words"), SoundClass::muffled_words);
  EXPECT_EQ(parse_class("Noise:"), SoundClass::noise);
  EXPECT_EQ(parse_class("breath"), SoundClass::breathes);
  EXPECT_FALSE(parse_class("scream"));
  EXPECT_FALSE(parse_class(""));
}

TEST(Seeds, DeriveIsDeterministicAndSpreads) {
  EXPECT_EQ(derive_seed(42, 1, 2), derive_seed(42, 1, 2));
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 50; ++a) {
    for (std::uint64_t b = 0; b < 50; ++b) seen.insert(derive_seed(42, a, b));
  }
  EXPECT_EQ(seen.size(), 2500U);
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
}

TEST(Seeds, CompileTime) {
  static_assert(derive_seed(7, 3) == derive_seed(7, 3, 0));
  SUCCEED();
}
