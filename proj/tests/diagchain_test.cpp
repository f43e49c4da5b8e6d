#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "oracles.hpp"
#include "wingpt/diagchain.hpp"

using namespace wingpt;
using namespace wingpt::diagchain;

namespace {

std::vector<EmrCase> load_cases() { return records::read_jsonl<EmrCase>(oracle::fixture("diagchain/cases.emr.jsonl")); }

std::vector<AgentAction> script_for(const std::string& case_id) {
  const auto j = nlohmann::json::parse(read_file(oracle::fixture("diagchain/scripts.json")));
  std::vector<AgentAction> out;
  for (const auto& line : j.at(case_id)) out.push_back(parse_action(line.get<std::string>()));
  return out;
}

void load_mock_judge(backend::ScriptedBackend& b) {
  const auto j = nlohmann::json::parse(read_file(oracle::fixture("diagchain/judge_mock.json")));
  for (const auto& [sha, replies] : j.at("replies").items()) {
    b.add_by_hash(sha, replies.get<std::vector<std::string>>());
  }
}

// Counts calls so a test can check the judge was never consulted.
class ForbiddenJudge : public backend::TextBackend {
 public:
  std::string complete(const std::string&) override {
    ++calls;
    return "\\boxed{1}";
  }
  int calls = 0;
};

}  // namespace

TEST(ActionGrammar, ParsesRequestsAndDiagnoses) {
  const auto r = parse_action("I need more data.\nrequest:  ECG ;  ; troponin I ");
  ASSERT_EQ(r.kind(), AgentAction::Kind::request_exams);
  EXPECT_EQ(r.names(), (std::vector<std::string>{"ECG", "troponin I"}));
  const auto d = parse_action("<think>REQUEST: x</think>REQUEST: a\nDIAGNOSIS:  Flu ");
  ASSERT_EQ(d.kind(), AgentAction::Kind::diagnose);
  EXPECT_EQ(d.text(), "Flu");
  EXPECT_THROW(parse_action("I think it is flu"), InvalidAction);
  EXPECT_THROW(parse_action("<think>DIAGNOSIS: flu</think>"), InvalidAction);
  EXPECT_EQ(render_action(parse_action("REQUEST: a;b")), "REQUEST: a; b");
  EXPECT_EQ(parse_action_script("REQUEST: a\nnoise\nDIAGNOSIS: b\n").size(), 2u);
}

TEST(ExamAgent, LooksUpPhysicalExamThenTests) {
  const auto cases = load_cases();
  const auto& c = cases.at(0);
  const auto res = exam_agent_respond(c, {"  TEMPERATURE ", "chest x-ray", "MRI brain"});
  ASSERT_EQ(res.size(), 3u);
  EXPECT_TRUE(res[0].available);
  EXPECT_EQ(res[0].value, "39.0 C");
  EXPECT_EQ(res[0].requested, "TEMPERATURE");
  EXPECT_EQ(res[1].value, "Right lower lobe consolidation");
  EXPECT_FALSE(res[2].available);
  EXPECT_EQ(res[2].value, kUnavailable);
  EXPECT_EQ(render_results(res),
            "TEMPERATURE: 39.0 C\nchest x-ray: Right lower lobe consolidation\nMRI brain: [unavailable]");
}

TEST(ExamAgent, SynonymsMapOntoEmrKeys) {
  const auto cases = load_cases();
  const auto dir = oracle::scratch_dir("synonyms");
  const std::string path = (dir / "syn.json").string();
  std::ofstream(path) << R"({"CXR": "Chest X-ray", "Body temp": "temperature"})";
  const SynonymTable syn = load_synonyms(path);
  EXPECT_EQ(syn.at("cxr"), "chest x-ray");
  const auto res = exam_agent_respond(cases.at(0), {"cxr", "BODY  TEMP"}, &syn);
  EXPECT_EQ(res[0].value, "Right lower lobe consolidation");
  EXPECT_EQ(res[1].value, "39.0 C");
  EXPECT_FALSE(exam_agent_respond(cases.at(0), {"cxr"})[0].available);
}

TEST(Consultation, GoldenTranscriptsReplay) {
  const auto cases = load_cases();
  ASSERT_EQ(cases.size(), 10u);
  backend::ScriptedBackend judge;
  load_mock_judge(judge);
  for (const auto& c : cases) {
    ScriptedAgent agent(script_for(c.case_id));
    const Episode e = run_episode(c, agent, kDefaultMaxTurns, judge);
    EXPECT_EQ(episode_jsonl(e), read_file(oracle::fixture("diagchain/golden_" + c.case_id + ".jsonl"))) << c.case_id;
  }
}

TEST(Consultation, OutcomesMatchScripts) {
  const auto cases = load_cases();
  backend::ScriptedBackend judge;
  load_mock_judge(judge);
  std::map<std::string, std::pair<Phase, double>> expected = {
      {"emr-003", {Phase::diagnosed, 0.0}},
      {"emr-007", {Phase::terminated_max_turns, 0.0}},
      {"emr-009", {Phase::diagnosed, 0.0}},
      {"emr-001", {Phase::diagnosed, 1.0}},
  };
  for (const auto& c : cases) {
    if (!expected.count(c.case_id)) continue;
    ScriptedAgent agent(script_for(c.case_id));
    const Episode e = run_episode(c, agent, kDefaultMaxTurns, judge);
    EXPECT_EQ(e.outcome, expected[c.case_id].first) << c.case_id;
    ASSERT_TRUE(e.reward.has_value());
    EXPECT_EQ(*e.reward, expected[c.case_id].second) << c.case_id;
  }
}

TEST(Consultation, MaxTurnsScoresZeroWithoutJudge) {
  const auto cases = load_cases();
  for (int max_turns = 1; max_turns <= 3; ++max_turns) {
    std::vector<AgentAction> script(max_turns, AgentAction::request_exams({"temperature"}));
    ScriptedAgent agent(script);
    ForbiddenJudge judge;
    const Episode e = run_episode(cases.at(0), agent, max_turns, judge);
    EXPECT_EQ(e.outcome, Phase::terminated_max_turns);
    EXPECT_EQ(e.reward, 0.0);
    EXPECT_FALSE(e.final_diagnosis.has_value());
    EXPECT_EQ(judge.calls, 0);
  }
}

TEST(Consultation, StepOnTerminalStateThrows) {
  const auto c = load_cases().at(0);
  auto s = begin_consultation(c);
  EXPECT_EQ(s.phase, Phase::summary_issued);
  s = step(s, c, AgentAction::diagnose("flu"), 5);
  EXPECT_EQ(s.phase, Phase::diagnosed);
  EXPECT_EQ(s.diagnosis, "flu");
  EXPECT_THROW(step(s, c, AgentAction::diagnose("flu"), 5), ActionOnTerminalState);
  auto t = step(begin_consultation(c), c, AgentAction::request_exams({"x"}), 1);
  EXPECT_EQ(t.phase, Phase::terminated_max_turns);
  EXPECT_THROW(step(t, c, AgentAction::request_exams({"y"}), 1), ActionOnTerminalState);
}

TEST(Consultation, NothingLeaksBeyondRequestedExams) {
  const auto cases = load_cases();
  std::mt19937_64 gen(13);
  const std::vector<std::string> decoys = {"mri brain", "lumbar puncture", "urinalysis"};
  for (int trial = 0; trial < 500; ++trial) {
    const auto& c = cases[gen() % cases.size()];
    std::vector<std::string> keys = decoys;
    for (const auto& [k, v] : c.physical_exam) keys.push_back(k);
    for (const auto& [k, v] : c.auxiliary_tests) keys.push_back(k);
    auto s = begin_consultation(c);
    std::set<std::string> asked;
    while (!is_terminal(s.phase)) {
      std::vector<std::string> req;
      for (std::size_t n = 1 + gen() % 3; n > 0; --n) req.push_back(keys[gen() % keys.size()]);
      asked.insert(req.begin(), req.end());
      s = step(s, c, AgentAction::request_exams(req), 5);
    }
    std::string text;
    for (const auto& e : s.transcript) text += e.text + "\n";
    auto check = [&](const std::map<std::string, std::string>& exams) {
      for (const auto& [k, v] : exams) {
        if (!asked.count(k)) {
          EXPECT_EQ(text.find(v), std::string::npos) << c.case_id << " leaked " << k;
        }
      }
    };
    check(c.physical_exam);
    check(c.auxiliary_tests);
    for (const auto& k : s.revealed_exams) EXPECT_TRUE(asked.count(k)) << k;
  }
}

TEST(Consultation, JudgeRequestStripsThink) {
  const auto c = load_cases().at(0);
  auto s = begin_consultation(c);
  s = step(s, c, AgentAction::request_exams({"temperature"}), 5);
  s = step(s, c, AgentAction::diagnose("<think>maybe flu</think>Pneumonia"), 5);
  const auto req = episode_judge_request(c, s);
  EXPECT_EQ(req.current_question(), kDiagnosisQuestion);
  EXPECT_EQ(req.predicted_answer(), "REQUEST: temperature\nFindings:\ntemperature: 39.0 C\nDiagnosis: Pneumonia");
  EXPECT_EQ(req.dialogue_history().at(0).text, initial_summary(c));
}

TEST(Consultation, TextAgentPromptShowsTranscript) {
  const auto c = load_cases().at(0);
  auto s = step(begin_consultation(c), c, AgentAction::request_exams({"temperature"}), 5);
  backend::SequenceBackend model({"<think>hmm</think>DIAGNOSIS: Pneumonia"});
  TextAgent agent(model);
  const auto a = agent.act(s);
  EXPECT_EQ(a.text(), "Pneumonia");
  const std::string p = model.prompts().at(0);
  EXPECT_NE(p.find("### summary\n" + initial_summary(c)), std::string::npos);
  EXPECT_NE(p.find("temperature: 39.0 C"), std::string::npos);
}

TEST(PolicyAgent, VocabularyAndGreedyActions) {
  const auto cases = load_cases();
  const auto vocab = action_vocabulary(cases);
  EXPECT_EQ(vocab.token(0), "<eos>");
  EXPECT_EQ(vocab.token(1), "case:emr-001");
  const auto& c = cases.at(0);
  policy::ToyPolicy p(vocab, 2);
  const auto prompt = case_prompt(vocab, c);
  const policy::TokenId req = vocab.id("REQUEST: chest x-ray\n");
  const policy::TokenId dx = vocab.id("DIAGNOSIS: Community-acquired pneumonia\n");
  p.mutable_row(p.state(prompt, std::vector<policy::TokenId>{}))[req] = 5.0;
  p.mutable_row(p.state(prompt, std::vector<policy::TokenId>{req}))[dx] = 5.0;
  PolicyAgent agent(p, c);
  backend::ScriptedBackend judge;
  load_mock_judge(judge);
  judge.set_default("\\boxed{1}");
  const Episode e = run_episode(c, agent, 5, judge);
  EXPECT_EQ(e.outcome, Phase::diagnosed);
  EXPECT_EQ(e.final_diagnosis, "Community-acquired pneumonia");
  EXPECT_EQ(e.events.at(1).text, "REQUEST: chest x-ray");

  policy::ToyPolicy blank(vocab, 2);
  PolicyAgent quitter(blank, c);
  const Episode q = run_episode(c, quitter, 5, judge);
  EXPECT_EQ(q.final_diagnosis, std::string(kNoDiagnosis));
}

TEST(ScriptReward, ScoresWholeScripts) {
  const auto cases = load_cases();
  backend::ScriptedBackend judge;
  judge.set_default("\\boxed{1}");
  const auto fn = script_reward_fn(cases, judge);
  EXPECT_EQ(fn(0, "REQUEST: chest x-ray\nDIAGNOSIS: Community-acquired pneumonia\n"), 1.0);
  EXPECT_EQ(fn(0, "REQUEST: chest x-ray\n"), 0.0);
  EXPECT_EQ(fn(0, "gibberish"), 0.0);
  EXPECT_EQ(fn(0, std::string(6, 'x') + "\nREQUEST: a\nREQUEST: a\nREQUEST: a\nREQUEST: a\nREQUEST: a\nDIAGNOSIS: b"),
            0.0);
}
