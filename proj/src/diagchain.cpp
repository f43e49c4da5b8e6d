#include "wingpt/diagchain.hpp"

#include "json.hpp"

namespace wingpt::diagchain {

namespace {

std::vector<std::string_view> lines_of(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t end = s.find('\n', pos);
    if (end == std::string_view::npos) end = s.size();
    out.push_back(s.substr(pos, end - pos));
    pos = end + 1;
  }
  return out;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && text::casefold(s.substr(0, prefix.size())) == text::casefold(prefix);
}

std::optional<AgentAction> parse_line(std::string_view raw) {
  std::string_view line = text::trim(raw);
  if (starts_with_ci(line, "REQUEST:")) {
    std::vector<std::string> names;
    std::string_view rest = line.substr(8);
    std::size_t pos = 0;
    while (pos <= rest.size()) {
      std::size_t end = rest.find(';', pos);
      if (end == std::string_view::npos) end = rest.size();
      std::string_view name = text::trim(rest.substr(pos, end - pos));
      if (!name.empty()) names.emplace_back(name);
      pos = end + 1;
    }
    return AgentAction::request_exams(std::move(names));
  }
  if (starts_with_ci(line, "DIAGNOSIS:")) {
    return AgentAction::diagnose(std::string(text::trim(line.substr(10))));
  }
  return std::nullopt;
}

const std::string* lookup(const std::map<std::string, std::string>& m, const std::string& key) {
  auto it = m.find(key);
  return it == m.end() ? nullptr : &it->second;
}

}  // namespace

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::summary_issued: return "summary_issued";
    case Phase::awaiting_decision: return "awaiting_decision";
    case Phase::exams_returned: return "exams_returned";
    case Phase::diagnosed: return "diagnosed";
    case Phase::terminated_max_turns: return "terminated_max_turns";
  }
  return "?";
}

bool is_terminal(Phase p) { return p == Phase::diagnosed || p == Phase::terminated_max_turns; }

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::summary: return "summary";
    case EventKind::request: return "request";
    case EventKind::results: return "results";
    case EventKind::diagnosis: return "diagnosis";
  }
  return "?";
}

AgentAction AgentAction::request_exams(std::vector<std::string> names) {
  if (names.empty()) throw InvalidAction("request_exams needs at least one exam name");
  for (auto& n : names) {
    n = std::string(text::trim(n));
    if (n.empty()) throw InvalidAction("request_exams: empty exam name");
  }
  AgentAction a;
  a.kind_ = Kind::request_exams;
  a.names_ = std::move(names);
  return a;
}

AgentAction AgentAction::diagnose(std::string text) {
  if (text::trim(text).empty()) throw InvalidAction("diagnose needs a nonempty diagnosis");
  AgentAction a;
  a.kind_ = Kind::diagnose;
  a.text_ = std::move(text);
  return a;
}

AgentAction parse_action(std::string_view output) {
  const std::string visible = judge::strip_think(output);
  std::optional<AgentAction> last;
  for (auto line : lines_of(visible)) {
    if (auto a = parse_line(line)) last = std::move(a);
  }
  if (!last) throw InvalidAction("no REQUEST: or DIAGNOSIS: line in agent output");
  return *last;
}

std::vector<AgentAction> parse_action_script(std::string_view text) {
  std::vector<AgentAction> out;
  for (auto line : lines_of(text)) {
    if (auto a = parse_line(line)) out.push_back(std::move(*a));
  }
  return out;
}

std::string render_action(const AgentAction& action) {
  if (action.kind() == AgentAction::Kind::diagnose) return "DIAGNOSIS: " + action.text();
  std::string out = "REQUEST: ";
  for (std::size_t i = 0; i < action.names().size(); ++i) {
    if (i > 0) out += "; ";
    out += action.names()[i];
  }
  return out;
}

SynonymTable load_synonyms(const std::string& path) {
  const auto j = nlohmann::json::parse(read_file(path));
  SynonymTable table;
  for (auto it = j.begin(); it != j.end(); ++it) {
    table[records::normalize_key(it.key())] = records::normalize_key(it->get<std::string>());
  }
  return table;
}

std::string initial_summary(const EmrCase& c) {
  std::string s = "Initial consultation summary\n";
  s += "Chief complaint: " + c.chief_complaint + "\n";
  s += "Present illness: " + c.present_illness + "\n";
  s += "Medical history: " + c.medical_history;
  return s;
}

std::vector<ExamResult> exam_agent_respond(const EmrCase& c, const std::vector<std::string>& requested,
                                           const SynonymTable* synonyms) {
  std::vector<ExamResult> out;
  out.reserve(requested.size());
  for (const auto& name : requested) {
    ExamResult r;
    r.requested = std::string(text::trim(name));
    r.key = records::normalize_key(name);
    if (synonyms) {
      if (auto it = synonyms->find(r.key); it != synonyms->end()) r.key = it->second;
    }
    const std::string* v = lookup(c.physical_exam, r.key);
    if (!v) v = lookup(c.auxiliary_tests, r.key);
    if (v) {
      r.available = true;
      r.value = *v;
    } else {
      r.value = std::string(kUnavailable);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string render_results(const std::vector<ExamResult>& results) {
  std::string out;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (i > 0) out.push_back('\n');
    out += results[i].requested + ": " + results[i].value;
  }
  return out;
}

ConsultationState begin_consultation(const EmrCase& c) {
  ConsultationState s;
  s.phase = Phase::summary_issued;
  s.transcript.push_back({EventKind::summary, initial_summary(c)});
  return s;
}

ConsultationState step(const ConsultationState& state, const EmrCase& c, const AgentAction& action,
                       int max_turns, const SynonymTable* synonyms) {
  if (is_terminal(state.phase)) {
    throw ActionOnTerminalState("consultation already ended in phase " + std::string(to_string(state.phase)));
  }
  ConsultationState next = state;
  if (action.kind() == AgentAction::Kind::diagnose) {
    next.transcript.push_back({EventKind::diagnosis, action.text()});
    next.diagnosis = action.text();
    next.phase = Phase::diagnosed;
    return next;
  }
  const auto results = exam_agent_respond(c, action.names(), synonyms);
  next.transcript.push_back({EventKind::request, render_action(action)});
  next.transcript.push_back({EventKind::results, render_results(results)});
  for (const auto& r : results) {
    if (r.available) next.revealed_exams.insert(r.key);
  }
  ++next.turn;
  next.phase = next.turn >= max_turns ? Phase::terminated_max_turns : Phase::exams_returned;
  return next;
}

AgentAction ScriptedAgent::act(const ConsultationState&) {
  if (next_ >= script_.size()) throw Error("ScriptedAgent: script exhausted");
  return script_[next_++];
}

std::string TextAgent::render_prompt(const ConsultationState& state) {
  std::string p =
      "You are a physician working through a consultation. At each turn either request "
      "examinations or give the final diagnosis, on a single line:\n"
      "REQUEST: exam name 1; exam name 2\n"
      "DIAGNOSIS: your diagnosis\n\n";
  for (const auto& e : state.transcript) {
    p += "### " + std::string(to_string(e.kind)) + "\n" + e.text + "\n\n";
  }
  p += "Your next action:";
  return p;
}

AgentAction TextAgent::act(const ConsultationState& state) {
  return parse_action(model_.complete(render_prompt(state)));
}

judge::JudgeRequest episode_judge_request(const EmrCase& c, const ConsultationState& state) {
  if (!state.diagnosis) throw Error("episode_judge_request: consultation has no diagnosis");
  std::string predicted;
  for (const auto& e : state.transcript) {
    if (e.kind == EventKind::request) {
      predicted += e.text + "\n";
    } else if (e.kind == EventKind::results) {
      predicted += "Findings:\n" + e.text + "\n";
    }
  }
  predicted += "Diagnosis: " + judge::strip_think(*state.diagnosis);
  return judge::JudgeRequest({{"user", initial_summary(c)}}, std::string(kDiagnosisQuestion),
                             judge::strip_think(c.final_diagnosis), predicted);
}

Episode run_episode(const EmrCase& c, AgentPolicy& agent, int max_turns, backend::TextBackend& judge_backend,
                    const SynonymTable* synonyms) {
  if (max_turns < 1) throw Error("run_episode: max_turns must be >= 1");
  ConsultationState state = begin_consultation(c);
  while (!is_terminal(state.phase)) state = step(state, c, agent.act(state), max_turns, synonyms);
  Episode e;
  e.case_id = c.case_id;
  e.events = state.transcript;
  e.outcome = state.phase;
  if (state.phase == Phase::diagnosed) {
    e.final_diagnosis = state.diagnosis;
    e.reward = judge::judge_reward(episode_judge_request(c, state), judge_backend);
  } else {
    e.reward = 0.0;
  }
  return e;
}

std::string episode_jsonl(const Episode& e) {
  std::string out;
  for (std::size_t i = 0; i < e.events.size(); ++i) {
    nlohmann::json j{{"case_id", e.case_id},
                     {"index", i},
                     {"kind", to_string(e.events[i].kind)},
                     {"text", e.events[i].text}};
    out += j.dump() + "\n";
  }
  nlohmann::json tail{{"case_id", e.case_id}, {"kind", "outcome"}, {"outcome", to_string(e.outcome)}};
  tail["final_diagnosis"] = e.final_diagnosis ? nlohmann::json(*e.final_diagnosis) : nlohmann::json(nullptr);
  tail["reward"] = e.reward ? nlohmann::json(*e.reward) : nlohmann::json(nullptr);
  out += tail.dump() + "\n";
  return out;
}

std::function<double(std::size_t, const std::string&)> script_reward_fn(const std::vector<EmrCase>& cases,
                                                                         backend::TextBackend& judge_backend,
                                                                         int max_turns) {
  return [&cases, &judge_backend, max_turns](std::size_t index, const std::string& completion) {
    const EmrCase& c = cases.at(index);
    ConsultationState state = begin_consultation(c);
    for (const auto& action : parse_action_script(completion)) {
      if (is_terminal(state.phase)) break;
      state = step(state, c, action, max_turns);
    }
    if (state.phase != Phase::diagnosed) return 0.0;
    return judge::judge_reward(episode_judge_request(c, state), judge_backend);
  };
}


policy::Vocabulary action_vocabulary(const std::vector<EmrCase>& cases) {
  std::set<std::string> prompts, requests, diagnoses;
  for (const auto& c : cases) {
    prompts.insert("case:" + c.case_id);
    for (const auto& [k, v] : c.physical_exam) requests.insert("REQUEST: " + k + "\n");
    for (const auto& [k, v] : c.auxiliary_tests) requests.insert("REQUEST: " + k + "\n");
    diagnoses.insert("DIAGNOSIS: " + std::string(text::trim(c.final_diagnosis)) + "\n");
  }
  std::vector<std::string> tokens{"<eos>"};
  for (const auto* group : {&prompts, &requests, &diagnoses}) tokens.insert(tokens.end(), group->begin(), group->end());
  return policy::Vocabulary(std::move(tokens));
}

std::vector<policy::TokenId> case_prompt(const policy::Vocabulary& vocab, const EmrCase& c) {
  return {vocab.id("case:" + c.case_id)};
}

PolicyAgent::PolicyAgent(const policy::ToyPolicy& policy, const EmrCase& c)
    : policy_(policy), prompt_(case_prompt(policy.vocab(), c)) {}

AgentAction PolicyAgent::act(const ConsultationState&) {
  const auto row = policy_.row(policy_.state(prompt_, generated_));
  policy::TokenId best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[static_cast<std::size_t>(best)]) best = static_cast<policy::TokenId>(i);
  }
  generated_.push_back(best);
  const std::string& tok = policy_.vocab().token(best);
  const auto parsed = parse_action_script(tok);
  if (parsed.empty()) return AgentAction::diagnose(std::string(kNoDiagnosis));
  return parsed.front();
}

}  // namespace wingpt::diagchain
