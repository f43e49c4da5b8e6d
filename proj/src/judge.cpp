#include "wingpt/judge.hpp"

#include <array>

#include "wingpt/verify.hpp"

namespace wingpt::judge {

namespace {

// Kept byte-identical to data/vrm_prompt_template.md.
constexpr std::string_view kTemplate = R"TPL(You are a professional evaluation expert who must assess the quality of the "predicted answer" based on the following four core elements:

- **Dialogue History** (contextual information)
- **Current Question** (the specific request made by the user)
- **Excellent Answer** (a high-quality reference answer that has been reviewed)
- **Predicted Answer** (the answer to be evaluated)

### Scoring Criteria:
- **1 point**: Indicates high-quality answers that are equivalent or close to the "excellent answer," meeting user needs;
- **0 points**: Indicates low-quality answers that contain hallucinations, omissions, errors, or fail to meet user needs;

> Note: The "excellent answer" has undergone rigorous review and is considered to be of high standard quality, serving as a benchmark for judgment.

Please output your evaluation results in the following structure:

---

### Dialogue History (in chronological order, from earliest to latest)
```
{Insert dialogue history}
```

### Current Question
```
user: {Insert original question}
```

### Excellent Answer (Reference Answer)
```
assistant: {Insert excellent answer}
```

### Predicted Answer (Answer to Evaluate)
```
assistant: {Insert predicted answer}
```

---

### Evaluation Analysis

[Perform item-by-item comparative analysis here]

---

### Predicted Answer Evaluation Score

\\boxed{Prediction answer evaluation score})TPL";

constexpr std::array<std::string_view, 4> kSlots = {
    "{Insert dialogue history}", "{Insert original question}", "{Insert excellent answer}",
    "{Insert predicted answer}"};

bool has_think_tag(std::string_view s) {
  return s.find("<think>") != std::string_view::npos || s.find("</think>") != std::string_view::npos;
}

std::string render_history(const std::vector<Turn>& history) {
  std::string out;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (i > 0) out.push_back('\n');
    out += history[i].role;
    out += ": ";
    out += history[i].text;
  }
  return out;
}

}  // namespace

UnparseableScore::UnparseableScore(std::string raw)
    : Error("UnparseableScore: judge output has no \\boxed{0} or \\boxed{1}"), raw_(std::move(raw)) {}

JudgeRequest::JudgeRequest(std::vector<Turn> dialogue_history, std::string current_question,
                           std::string reference_answer, std::string predicted_answer)
    : history_(std::move(dialogue_history)),
      question_(std::move(current_question)),
      reference_(std::move(reference_answer)),
      predicted_(std::move(predicted_answer)) {
  if (has_think_tag(reference_)) throw InvalidRequest("reference answer contains a think segment");
  if (has_think_tag(predicted_)) throw InvalidRequest("predicted answer contains a think segment");
}

std::string strip_think(std::string_view text) {
  std::string out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t open = text.find("<think>", pos);
    const std::size_t close = text.find("</think>", pos);
    if (open == std::string_view::npos && close == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    if (close != std::string_view::npos && (open == std::string_view::npos || close < open)) {
      // Unmatched close: everything before it was reasoning.
      pos = close + 8;
      out.clear();
      continue;
    }
    out.append(text.substr(pos, open - pos));
    const std::size_t end = text.find("</think>", open + 7);
    if (end == std::string_view::npos) break;
    pos = end + 8;
  }
  return std::string(text::trim(out));
}

std::string_view vrm_template() { return kTemplate; }

std::string render_vrm_prompt(const JudgeRequest& req) {
  const std::array<std::string, 4> values = {render_history(req.dialogue_history()),
                                             req.current_question(), req.reference_answer(),
                                             req.predicted_answer()};
  std::string out;
  out.reserve(kTemplate.size() + 256);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < kSlots.size(); ++i) {
    const std::size_t at = kTemplate.find(kSlots[i], pos);
    out.append(kTemplate.substr(pos, at - pos));
    out.append(values[i]);
    pos = at + kSlots[i].size();
  }
  out.append(kTemplate.substr(pos));
  return out;
}

JudgeVerdict parse_vrm_score(std::string_view raw) {
  std::string content;
  try {
    content = std::string(text::trim(verify::extract_boxed(raw)));
  } catch (const verify::ExtractionError&) {
    throw UnparseableScore(std::string(raw));
  }
  JudgeVerdict v;
  if (content == "0") {
    v.score = 0;
  } else if (content == "1") {
    v.score = 1;
  } else {
    throw UnparseableScore(std::string(raw));
  }
  v.raw = std::string(raw);
  v.analysis = std::string(text::trim(raw.substr(0, raw.rfind("\\boxed{"))));
  return v;
}

JudgeVerdict judge(const JudgeRequest& req, backend::TextBackend& backend, const JudgeOptions& opts) {
  const std::string prompt = render_vrm_prompt(req);
  const int attempts = std::max(1, opts.max_attempts);
  for (int attempt = 1;; ++attempt) {
    std::string raw;
    try {
      raw = backend.complete(prompt);
    } catch (const backend::BackendUnavailable& e) {
      throw JudgeUnavailable(e.what());
    }
    try {
      return parse_vrm_score(raw);
    } catch (const UnparseableScore&) {
      if (attempt >= attempts) throw;
    }
  }
}

double judge_reward(const JudgeRequest& req, backend::TextBackend& backend, const JudgeOptions& opts) {
  return judge(req, backend, opts).score == 1 ? 1.0 : 0.0;
}

std::vector<JudgeVerdict> judge_batch(const std::vector<JudgeRequest>& requests,
                                      backend::TextBackend& backend, std::size_t max_in_flight,
                                      const JudgeOptions& opts) {
  std::vector<JudgeVerdict> out(requests.size());
  backend::BoundedBackend bounded(backend, static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, max_in_flight)));
  backend::parallel_for(requests.size(), max_in_flight,
                        [&](std::size_t i) { out[i] = judge(requests[i], bounded, opts); });
  return out;
}

}  // namespace wingpt::judge
