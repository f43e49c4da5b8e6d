#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wingpt/backend.hpp"
#include "wingpt/common.hpp"

// Verifier-based reward protocol: render the evaluation prompt, ask a judge
// backend, read back a binary score.
namespace wingpt::judge {

class InvalidRequest : public Error {
 public:
  using Error::Error;
};

class UnparseableScore : public Error {
 public:
  explicit UnparseableScore(std::string raw);
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

class JudgeUnavailable : public Error {
 public:
  using Error::Error;
};

struct Turn {
  std::string role;
  std::string text;

  bool operator==(const Turn&) const = default;
};

// Reference and predicted answers must be free of think segments; construction
// rejects them otherwise. Use strip_think() first when in doubt.
class JudgeRequest {
 public:
  JudgeRequest(std::vector<Turn> dialogue_history, std::string current_question,
               std::string reference_answer, std::string predicted_answer);

  const std::vector<Turn>& dialogue_history() const { return history_; }
  const std::string& current_question() const { return question_; }
  const std::string& reference_answer() const { return reference_; }
  const std::string& predicted_answer() const { return predicted_; }

 private:
  std::vector<Turn> history_;
  std::string question_;
  std::string reference_;
  std::string predicted_;
};

struct JudgeVerdict {
  int score = 0;
  std::string analysis;
  std::string raw;
};

// Removes every <think>...</think> segment (and a dangling unmatched tag) and trims.
std::string strip_think(std::string_view text);

// The evaluation prompt template with its four slots unfilled.
std::string_view vrm_template();

// Fills the slots in a single pass, so slot markers appearing inside the
// inserted text are left alone.
std::string render_vrm_prompt(const JudgeRequest& req);

JudgeVerdict parse_vrm_score(std::string_view raw);

struct JudgeOptions {
  int max_attempts = 3;
};

// render -> backend -> parse; unparseable replies are retried up to max_attempts.
JudgeVerdict judge(const JudgeRequest& req, backend::TextBackend& backend,
                   const JudgeOptions& opts = {});
double judge_reward(const JudgeRequest& req, backend::TextBackend& backend,
                    const JudgeOptions& opts = {});

// Scores a batch with at most `max_in_flight` concurrent requests; verdicts
// come back in request order.
std::vector<JudgeVerdict> judge_batch(const std::vector<JudgeRequest>& requests,
                                      backend::TextBackend& backend, std::size_t max_in_flight = 4,
                                      const JudgeOptions& opts = {});

}  // namespace wingpt::judge
