#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "wingpt/backend.hpp"
#include "wingpt/judge.hpp"
#include "wingpt/policy.hpp"
#include "wingpt/records.hpp"

// Evidence-based diagnostic chain: an initial consultation summary, rounds of
// examination requests answered from the EMR, and a final diagnosis scored by
// the verifier judge.
namespace wingpt::diagchain {

using records::EmrCase;

enum class Phase { summary_issued, awaiting_decision, exams_returned, diagnosed, terminated_max_turns };
std::string_view to_string(Phase p);
bool is_terminal(Phase p);

class InvalidAction : public Error {
 public:
  using Error::Error;
};

class ActionOnTerminalState : public Error {
 public:
  using Error::Error;
};

class AgentAction {
 public:
  enum class Kind { request_exams, diagnose };

  static AgentAction request_exams(std::vector<std::string> names);
  static AgentAction diagnose(std::string text);

  Kind kind() const { return kind_; }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& text() const { return text_; }

 private:
  AgentAction() = default;
  Kind kind_ = Kind::diagnose;
  std::vector<std::string> names_;
  std::string text_;
};

// Line grammar, last matching line wins, think segments ignored:
//   REQUEST: name1; name2
//   DIAGNOSIS: text
AgentAction parse_action(std::string_view output);
std::string render_action(const AgentAction& action);
// Every line that matches the grammar, in order.
std::vector<AgentAction> parse_action_script(std::string_view text);

inline constexpr std::string_view kUnavailable = "[unavailable]";

struct ExamResult {
  std::string requested;  // as the agent wrote it
  std::string key;        // normalized lookup key
  bool available = false;
  std::string value;
};

// Maps normalized synonyms onto normalized EMR keys.
using SynonymTable = std::map<std::string, std::string>;
SynonymTable load_synonyms(const std::string& path);

std::string initial_summary(const EmrCase& c);

// Physical exam first, then auxiliary tests. Unknown names come back unavailable.
std::vector<ExamResult> exam_agent_respond(const EmrCase& c, const std::vector<std::string>& requested,
                                           const SynonymTable* synonyms = nullptr);
std::string render_results(const std::vector<ExamResult>& results);

enum class EventKind { summary, request, results, diagnosis };
std::string_view to_string(EventKind k);

struct Event {
  EventKind kind = EventKind::summary;
  std::string text;

  bool operator==(const Event&) const = default;
};

struct ConsultationState {
  Phase phase = Phase::summary_issued;
  int turn = 0;
  std::set<std::string> revealed_exams;
  std::vector<Event> transcript;
  std::optional<std::string> diagnosis;
};

ConsultationState begin_consultation(const EmrCase& c);

ConsultationState step(const ConsultationState& state, const EmrCase& c, const AgentAction& action,
                       int max_turns, const SynonymTable* synonyms = nullptr);

class AgentPolicy {
 public:
  virtual ~AgentPolicy() = default;
  virtual AgentAction act(const ConsultationState& state) = 0;
};

class ScriptedAgent : public AgentPolicy {
 public:
  explicit ScriptedAgent(std::vector<AgentAction> script) : script_(std::move(script)) {}
  AgentAction act(const ConsultationState& state) override;

 private:
  std::vector<AgentAction> script_;
  std::size_t next_ = 0;
};

// Asks a text model for the next action using the line grammar.
class TextAgent : public AgentPolicy {
 public:
  explicit TextAgent(backend::TextBackend& model) : model_(model) {}
  AgentAction act(const ConsultationState& state) override;
  static std::string render_prompt(const ConsultationState& state);

 private:
  backend::TextBackend& model_;
};

struct Episode {
  std::string case_id;
  std::vector<Event> events;
  std::optional<std::string> final_diagnosis;
  std::optional<double> reward;
  Phase outcome = Phase::summary_issued;
};

inline constexpr int kDefaultMaxTurns = 5;
inline constexpr std::string_view kDiagnosisQuestion =
    "Based on the consultation summary, request the examinations you need and give the final diagnosis.";

// Judge request for a diagnosed consultation: the summary is the history, the
// rendered exam rounds plus diagnosis is the predicted answer.
judge::JudgeRequest episode_judge_request(const EmrCase& c, const ConsultationState& state);

// Drives the agent to a terminal phase. Diagnosed episodes are scored by the
// judge; episodes that run out of turns score 0 without a judge call.
Episode run_episode(const EmrCase& c, AgentPolicy& agent, int max_turns, backend::TextBackend& judge_backend,
                    const SynonymTable* synonyms = nullptr);

// One line per event, then an outcome line.
std::string episode_jsonl(const Episode& e);

}  // namespace wingpt::diagchain

namespace wingpt::diagchain {

// Reward for a policy whose completion is a whole action script (one
// REQUEST/DIAGNOSIS line per turn) for case `index`. Unparseable completions
// and scripts that stop before a terminal phase score 0.
std::function<double(std::size_t, const std::string&)> script_reward_fn(
    const std::vector<EmrCase>& cases, backend::TextBackend& judge_backend, int max_turns = kDefaultMaxTurns);


// Action-level vocabulary for toy policies: <eos>, one "case:<id>" prompt token
// per case, one "REQUEST: <exam>" line per exam name, and one "DIAGNOSIS: <text>"
// line per distinct final diagnosis. Tokens are sorted so the vocabulary does
// not depend on case order.
policy::Vocabulary action_vocabulary(const std::vector<EmrCase>& cases);
std::vector<policy::TokenId> case_prompt(const policy::Vocabulary& vocab, const EmrCase& c);

// Agent driven by a toy policy over an action vocabulary: each turn emits the
// most likely next token. <eos> or a non-action token ends the consultation
// with an empty-handed diagnosis.
class PolicyAgent : public AgentPolicy {
 public:
  PolicyAgent(const policy::ToyPolicy& policy, const EmrCase& c);
  AgentAction act(const ConsultationState& state) override;

 private:
  const policy::ToyPolicy& policy_;
  std::vector<policy::TokenId> prompt_;
  std::vector<policy::TokenId> generated_;
};

inline constexpr std::string_view kNoDiagnosis = "no diagnosis reached";

}  // namespace wingpt::diagchain
