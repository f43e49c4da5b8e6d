#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "wingpt/verify.hpp"

using namespace wingpt;
using namespace wingpt::verify;

namespace {

std::string repeat_tokens(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += "w ";
  return s;
}

// Brace-balanced random string over a small alphabet.
std::string balanced(Rng& rng, int depth = 0) {
  std::string s;
  const auto n = rng.below(5);
  for (std::uint64_t i = 0; i < n; ++i) {
    switch (rng.below(4)) {
      case 0: s += "x"; break;
      case 1: s += "\\frac"; break;
      case 2: s += " 1"; break;
      default:
        if (depth < 3) s += "{" + balanced(rng, depth + 1) + "}";
    }
  }
  return s;
}

}  // namespace

TEST(ExtractBoxed, Examples) {
  EXPECT_EQ(extract_boxed("so \\boxed{42}."), "42");
  EXPECT_EQ(extract_boxed("\\boxed{\\frac{1}{2}}"), "\\frac{1}{2}");
  EXPECT_EQ(extract_boxed("\\boxed{1} then \\boxed{2}"), "2");
}

TEST(ExtractBoxed, Errors) {
  try {
    extract_boxed("no box here");
    FAIL();
  } catch (const ExtractionError& e) {
    EXPECT_EQ(e.kind(), ExtractError::NoBoxedAnswer);
  }
  try {
    extract_boxed("\\boxed{unclosed {");
    FAIL();
  } catch (const ExtractionError& e) {
    EXPECT_EQ(e.kind(), ExtractError::UnbalancedBraces);
  }
}

TEST(ExtractBoxed, InverseOfFormattingOnBalancedStrings) {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const std::string s = balanced(rng);
    EXPECT_EQ(extract_boxed("prefix \\boxed{" + s + "} suffix"), s);
  }
}

TEST(VerifyExact, Examples) {
  EXPECT_TRUE(verify_exact("4", "4").correct);
  EXPECT_TRUE(verify_exact(" 4.0 ", "4").correct);
  EXPECT_FALSE(verify_exact("5", "4").correct);
  EXPECT_TRUE(verify_exact("Acute  Gout", "acute gout").correct);
  EXPECT_TRUE(verify_exact("1000000.5", "1000000").correct);
  EXPECT_FALSE(verify_exact("1.001", "1").correct);
}

TEST(VerifyExact, CorrectImpliesExtracted) {
  const auto v = verify_exact("4", "4");
  ASSERT_TRUE(v.extracted);
  EXPECT_EQ(*v.extracted, "4");
}

TEST(VerifyBounds, Examples) {
  EXPECT_TRUE(verify_bounds(3.2, 3.0, 3.5).correct);
  EXPECT_FALSE(verify_bounds(3.6, 3.0, 3.5).correct);
  EXPECT_TRUE(verify_bounds(3.5, 3.0, 3.5).correct);
  EXPECT_TRUE(verify_bounds(3.0, 3.0, 3.5).correct);
  EXPECT_THROW(verify_bounds(1.0, 2.0, 1.0), InvalidBounds);
}

TEST(LengthPenalty, Examples) {
  const LengthPenaltyConfig cfg;
  EXPECT_EQ(length_penalty(true, 4000, cfg), 0.0);
  EXPECT_NEAR(length_penalty(true, 16384, cfg), 0.5, 1e-12);
  EXPECT_NEAR(length_penalty(true, 12288, cfg), 0.25, 1e-12);
  EXPECT_EQ(length_penalty(true, 8192, cfg), 0.0);
  EXPECT_NEAR(length_penalty(true, 100000, cfg), 0.5, 1e-12);
}

TEST(LengthPenalty, MonotoneOnRandomConfigs) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    LengthPenaltyConfig cfg;
    cfg.free_limit = 1 + rng.below(1000);
    cfg.max_length = cfg.free_limit + 1 + rng.below(1000);
    cfg.cap = rng.uniform();
    double prev = 0.0;
    for (std::size_t len = 0; len <= cfg.max_length + 10; ++len) {
      const double p = length_penalty(true, len, cfg);
      ASSERT_GE(p, prev);
      ASSERT_LE(p, cfg.cap + 1e-15);
      prev = p;
    }
    EXPECT_EQ(length_penalty(true, cfg.free_limit, cfg), 0.0);
    EXPECT_NEAR(length_penalty(true, cfg.max_length, cfg), cfg.cap, 1e-12);
  }
}

TEST(LengthPenalty, ConfigValidation) {
  LengthPenaltyConfig cfg;
  cfg.free_limit = cfg.max_length;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.cap = 1.5;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(RuleReward, Examples) {
  const LengthPenaltyConfig cfg;
  EXPECT_EQ(rule_reward(repeat_tokens(3999) + "\\boxed{7}", "7", cfg).value, 1.0);
  EXPECT_NEAR(rule_reward(repeat_tokens(16383) + "\\boxed{7}", "7", cfg).value, 0.5, 1e-12);
  EXPECT_EQ(rule_reward("\\boxed{8}", "7", cfg).value, 0.0);
  const auto missing = rule_reward("seven", "7", cfg);
  EXPECT_EQ(missing.value, 0.0);
  EXPECT_NE(missing.verdict.detail.find("NoBoxedAnswer"), std::string::npos);
}
