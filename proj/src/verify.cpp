#include "wingpt/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace wingpt::verify {

namespace {

constexpr std::string_view kBoxedOpen = "\\boxed{";

std::string_view extract_error_name(ExtractError k) {
  return k == ExtractError::NoBoxedAnswer ? "NoBoxedAnswer" : "UnbalancedBraces";
}

}  // namespace

ExtractionError::ExtractionError(ExtractError kind, const std::string& detail)
    : Error(std::string(extract_error_name(kind)) + ": " + detail), kind_(kind) {}

void LengthPenaltyConfig::validate() const {
  if (!(free_limit > 0 && free_limit < max_length)) {
    throw Error("LengthPenaltyConfig: require 0 < free_limit < max_length");
  }
  if (!(cap >= 0.0 && cap <= 1.0)) throw Error("LengthPenaltyConfig: cap must lie in [0, 1]");
}

std::size_t whitespace_token_count(std::string_view text) {
  return text::split_whitespace(text).size();
}

std::string extract_boxed(std::string_view text) {
  const std::size_t start = text.rfind(kBoxedOpen);
  if (start == std::string_view::npos) {
    throw ExtractionError(ExtractError::NoBoxedAnswer, "no \\boxed{...} in response");
  }
  const std::size_t body = start + kBoxedOpen.size();
  int depth = 1;
  for (std::size_t i = body; i < text.size(); ++i) {
    if (text[i] == '{') {
      ++depth;
    } else if (text[i] == '}') {
      if (--depth == 0) return std::string(text.substr(body, i - body));
    }
  }
  throw ExtractionError(ExtractError::UnbalancedBraces, "unterminated \\boxed{");
}

RuleVerdict verify_exact(std::string_view extracted, std::string_view gold) {
  RuleVerdict v;
  v.extracted = std::string(extracted);
  const std::string a = text::normalize(extracted);
  const std::string b = text::normalize(gold);
  double x = 0.0, y = 0.0;
  if (text::parse_double(a, x) && text::parse_double(b, y)) {
    const double scale = std::max(std::abs(x), std::abs(y));
    v.correct = std::abs(x - y) <= 1e-6 * scale;
    v.detail = v.correct ? "numeric match" : "numeric mismatch";
  } else {
    v.correct = a == b;
    v.detail = v.correct ? "exact match" : "mismatch";
  }
  return v;
}

RuleVerdict verify_bounds(double value, double lower, double upper) {
  if (std::isnan(lower) || std::isnan(upper) || lower > upper) {
    throw InvalidBounds("verify_bounds: lower must be <= upper");
  }
  RuleVerdict v;
  v.extracted = text::format_double(value);
  v.correct = lower <= value && value <= upper;
  v.detail = v.correct ? "within bounds" : "out of bounds";
  return v;
}

double length_penalty(bool /*correct*/, std::size_t length, const LengthPenaltyConfig& cfg) {
  if (length <= cfg.free_limit) return 0.0;
  const double span = static_cast<double>(cfg.max_length - cfg.free_limit);
  const double t = std::clamp(static_cast<double>(length - cfg.free_limit) / span, 0.0, 1.0);
  return cfg.cap * (1.0 - std::cos(std::numbers::pi * t)) / 2.0;
}

RewardOutcome rule_reward(std::string_view response, std::string_view gold,
                          const LengthPenaltyConfig& cfg, const Tokenizer& tokenizer) {
  RewardOutcome out;
  out.length = tokenizer(response);
  try {
    out.verdict = verify_exact(extract_boxed(response), gold);
  } catch (const ExtractionError& e) {
    out.verdict.correct = false;
    out.verdict.detail = e.what();
  }
  out.base = out.verdict.correct ? 1.0 : 0.0;
  out.penalty = length_penalty(out.verdict.correct, out.length, cfg);
  out.value = std::max(0.0, out.base - out.penalty);
  return out;
}

RewardOutcome rule_reward(const records::CotRecord& cot, const records::QaRecord& qa,
                          const LengthPenaltyConfig& cfg, const Tokenizer& tokenizer) {
  if (!qa.gold_answer) throw Error("rule_reward: record " + qa.id + " has no gold answer");
  // Length is the whole response; the answer is read from the final segment.
  RewardOutcome out = rule_reward(cot.answer.empty() ? cot.response_raw : cot.answer,
                                  *qa.gold_answer, cfg, tokenizer);
  out.length = tokenizer(cot.response_raw);
  out.penalty = length_penalty(out.verdict.correct, out.length, cfg);
  out.value = std::max(0.0, out.base - out.penalty);
  return out;
}

}  // namespace wingpt::verify
