#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "wingpt/common.hpp"
#include "wingpt/records.hpp"

// Rule-based answer checking and the length penalty used for verifiable rewards.
namespace wingpt::verify {

enum class ExtractError { NoBoxedAnswer, UnbalancedBraces };

class ExtractionError : public Error {
 public:
  ExtractionError(ExtractError kind, const std::string& detail);
  ExtractError kind() const { return kind_; }

 private:
  ExtractError kind_;
};

class InvalidBounds : public Error {
 public:
  using Error::Error;
};

struct RuleVerdict {
  bool correct = false;
  std::optional<std::string> extracted;
  std::string detail;
};

struct LengthPenaltyConfig {
  std::size_t free_limit = 8192;
  std::size_t max_length = 16384;
  double cap = 0.5;

  void validate() const;
};

// Counts tokens for length penalties. Whitespace splitting by default.
using Tokenizer = std::function<std::size_t(std::string_view)>;
std::size_t whitespace_token_count(std::string_view text);

// Content of the last \boxed{...}, matched by brace depth.
std::string extract_boxed(std::string_view text);

// Trim, case-fold and collapse whitespace; numeric strings compare with a
// relative tolerance of 1e-6.
RuleVerdict verify_exact(std::string_view extracted, std::string_view gold);

// Inclusive on both ends.
RuleVerdict verify_bounds(double value, double lower, double upper);

// 0 up to free_limit, then cap * (1 - cos(pi * t)) / 2 with
// t = clamp((length - free_limit) / (max_length - free_limit), 0, 1).
double length_penalty(bool correct, std::size_t length, const LengthPenaltyConfig& cfg);

struct RewardOutcome {
  double value = 0.0;
  double base = 0.0;
  double penalty = 0.0;
  std::size_t length = 0;
  RuleVerdict verdict;
};

// 1 if the boxed answer matches the gold answer, else 0, minus the length
// penalty, floored at 0. Extraction failures score 0 with the reason in detail.
RewardOutcome rule_reward(std::string_view response, std::string_view gold,
                          const LengthPenaltyConfig& cfg,
                          const Tokenizer& tokenizer = whitespace_token_count);

RewardOutcome rule_reward(const records::CotRecord& cot, const records::QaRecord& qa,
                          const LengthPenaltyConfig& cfg,
                          const Tokenizer& tokenizer = whitespace_token_count);

}  // namespace wingpt::verify
