#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "wingpt/curation.hpp"

using namespace wingpt;
using namespace wingpt::curation;
using records::Category;
using records::CotRecord;
using records::DifficultyLevel;
using records::LabeledQa;
using records::PassStats;
using records::QaRecord;

namespace {

CotRecord cot(const std::string& id, const std::string& raw) {
  CotRecord r;
  r.record_id = id;
  r.response_raw = raw;
  const auto v = check_think_format(raw);
  if (v.valid) {
    r.think = v.think;
    r.answer = v.answer;
  }
  return r;
}

QaRecord qa(const std::string& id, std::optional<std::string> gold) {
  QaRecord q;
  q.id = id;
  q.question = "question " + id;
  q.gold_answer = std::move(gold);
  return q;
}

std::vector<LabeledQa> make_pool(std::size_t per_category, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<LabeledQa> pool;
  std::size_t next = 0;
  for (Category c : records::kAllCategories) {
    for (std::size_t i = 0; i < per_category; ++i) {
      LabeledQa l;
      l.record = qa("p" + std::to_string(next++), std::nullopt);
      l.record.category = c;
      l.label.level = records::kAllLevels[gen() % 3];
      pool.push_back(l);
    }
  }
  return pool;
}

}  // namespace

TEST(ThinkFormat, AcceptsWellFormed) {
  const auto v = check_think_format("<think>steps</think>42");
  ASSERT_TRUE(v.valid);
  EXPECT_EQ(v.think, "steps");
  EXPECT_EQ(v.answer, "42");
}

TEST(ThinkFormat, ReportsEachDefect) {
  struct Case {
    const char* raw;
    FormatError reason;
  };
  const Case cases[] = {
      {"steps 42", FormatError::MissingTags},
      {"<think>a</think><think>b</think>c", FormatError::DuplicateTags},
      {"</think>x<think>y", FormatError::TagOrder},
      {"hello <think>a</think>b", FormatError::LeadingText},
      {"<think>   </think>b", FormatError::EmptyThink},
      {"<think>a</think>  \n", FormatError::EmptyAnswer},
  };
  for (const auto& c : cases) {
    const auto v = check_think_format(c.raw);
    EXPECT_FALSE(v.valid) << c.raw;
    ASSERT_TRUE(v.reason.has_value()) << c.raw;
    EXPECT_EQ(*v.reason, c.reason) << c.raw;
  }
}

TEST(Repetition, SpecExamples) {
  EXPECT_DOUBLE_EQ(repetition_ratio("a b c d e", 4), 0.0);
  EXPECT_DOUBLE_EQ(repetition_ratio("x x x x x x x x", 4), 0.8);
  EXPECT_DOUBLE_EQ(repetition_ratio("a", 4), 0.0);
}

TEST(Repetition, MatchesBruteForceCounter) {
  std::mt19937_64 gen(7);
  const char* words[] = {"a", "b", "c", "d"};
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t len = gen() % 40;
    const std::size_t alphabet = 1 + gen() % 4;
    std::string text;
    for (std::size_t i = 0; i < len; ++i) {
      if (i) text += (gen() % 5 == 0) ? "  \n" : " ";
      text += words[gen() % alphabet];
    }
    for (std::size_t n : {2u, 3u, 4u, 6u}) {
      const double got = repetition_ratio(text, n);
      EXPECT_DOUBLE_EQ(got, oracle::repetition_ratio(text, n)) << text << " n=" << n;
      EXPECT_GE(got, 0.0);
      EXPECT_LE(got, 1.0);
    }
  }
}

TEST(Filter, PlantedFixtureRejectsExactlyThePlantedDefects) {
  const auto recs = records::read_jsonl<CotRecord>(oracle::fixture("curation/planted.cot.jsonl"));
  ASSERT_EQ(recs.size(), 100u);
  const auto expected = nlohmann::json::parse(read_file(oracle::fixture("curation/planted.expected.json")));
  const auto res = filter_dataset(recs, NgramFilterConfig{});
  ASSERT_EQ(res.rejected.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(res.rejected[i].index, expected[i].at("index").get<std::size_t>());
    const std::string reason = expected[i].at("reason");
    EXPECT_EQ(res.rejected[i].reason.rfind(reason, 0), 0u) << res.rejected[i].reason;
    EXPECT_EQ(res.rejected[i].record, recs[res.rejected[i].index]);
  }
  EXPECT_EQ(res.kept.size() + res.rejected.size(), recs.size());
  const auto golden = records::read_jsonl<CotRecord>(oracle::fixture("curation/planted.kept.golden.jsonl"));
  EXPECT_EQ(res.kept, golden);
}

TEST(Filter, ZeroThresholdRejectsAnyRepeat) {
  const std::vector<CotRecord> recs = {cot("a", "<think>x one two three four one two three four y</think>z"),
                                       cot("b", "<think>all words here differ</think>y")};
  const auto res = filter_dataset(recs, NgramFilterConfig{4, 0.0});
  ASSERT_EQ(res.rejected.size(), 1u);
  EXPECT_EQ(res.rejected[0].record.record_id, "a");
  EXPECT_EQ(res.rejected[0].reason.rfind("repetition", 0), 0u);
  ASSERT_EQ(res.kept.size(), 1u);
  EXPECT_EQ(res.kept[0].record_id, "b");
}

TEST(Filter, ConfigValidation) {
  EXPECT_THROW((NgramFilterConfig{1, 0.3}).validate(), Error);
  EXPECT_THROW((NgramFilterConfig{4, 1.5}).validate(), Error);
  EXPECT_NO_THROW((NgramFilterConfig{2, 1.0}).validate());
}

TEST(SelectVerifiable, KeepsOnlyCorrectBoxedAnswers) {
  std::map<std::string, QaRecord> qs = {{"a", qa("a", "4")}, {"b", qa("b", "4")}, {"c", qa("c", "4")}};
  const std::vector<CotRecord> recs = {cot("a", "<think>t</think>\\boxed{4}"), cot("b", "<think>t</think>\\boxed{5}"),
                                       cot("c", "<think>t</think>four")};
  const auto res = select_verifiable(recs, qs);
  ASSERT_EQ(res.kept.size(), 1u);
  EXPECT_EQ(res.kept[0].record_id, "a");
  ASSERT_EQ(res.dropped.size(), 2u);
  EXPECT_EQ(res.dropped[0].record.record_id, "b");
  EXPECT_EQ(res.dropped[1].record.record_id, "c");
  EXPECT_NE(res.dropped[1].reason.find("NoBoxedAnswer"), std::string::npos);
}

TEST(SelectVerifiable, MissingGoldNamesTheRecord) {
  std::map<std::string, QaRecord> qs = {{"a", qa("a", std::nullopt)}};
  try {
    select_verifiable({cot("a", "<think>t</think>\\boxed{4}")}, qs);
    FAIL() << "expected MissingGold";
  } catch (const MissingGold& e) {
    EXPECT_EQ(e.record_id(), "a");
  }
  EXPECT_THROW(select_verifiable({cot("zz", "<think>t</think>\\boxed{4}")}, qs), MissingGold);
}

TEST(SelectUnverifiable, TopFractionPerQuestion) {
  std::vector<CotRecord> recs;
  const double scores[] = {0.1, 0.9, 0.5, 0.3};
  for (int i = 0; i < 4; ++i) recs.push_back(cot("q", "<think>t</think>answer " + std::to_string(i)));
  auto scorer = [&](const CotRecord& r) { return scores[r.answer.back() - '0']; };
  const auto top = select_unverifiable(recs, scorer, 0.25);
  ASSERT_EQ(top.size(), 1u);
  EXPECT_EQ(top[0].answer, "answer 1");
  EXPECT_EQ(select_unverifiable(recs, scorer, 1.0), recs);
}

TEST(SelectUnverifiable, TiesGoToEarlierCandidate) {
  std::vector<CotRecord> recs;
  for (int i = 0; i < 3; ++i) recs.push_back(cot("q", "<think>t</think>answer " + std::to_string(i)));
  const auto top = select_unverifiable(recs, [](const CotRecord&) { return 0.5; }, 0.34);
  ASSERT_EQ(top.size(), 2u);
  EXPECT_EQ(top[0].answer, "answer 0");
  EXPECT_EQ(top[1].answer, "answer 1");
}

TEST(Difficulty, RubricIsEmbeddedInPrompt) {
  const auto q = qa("a", "4");
  const auto c = cot("a", "<think>t</think>\\boxed{4}");
  const std::string p = render_difficulty_prompt(q, c);
  EXPECT_NE(p.find(std::string(difficulty_rubric())), std::string::npos);
  EXPECT_NE(difficulty_rubric().find("Basic (low knowledge density or complexity"), std::string::npos);
}

TEST(Difficulty, ParsesScriptedLabels) {
  EXPECT_EQ(parse_difficulty("advanced").level, DifficultyLevel::advanced);
  EXPECT_EQ(parse_difficulty("Multi-step proof. \\boxed{Intermediate}").level, DifficultyLevel::intermediate);
  EXPECT_EQ(parse_difficulty("Multi-step proof. \\boxed{Intermediate}").rationale, "Multi-step proof.");
  EXPECT_THROW(parse_difficulty("expert"), UnparseableJudgeOutput);
  EXPECT_THROW(parse_difficulty("\\boxed{hard}"), UnparseableJudgeOutput);
}

TEST(Difficulty, ScriptedJudgeTranscript) {
  const char* script[] = {"basic", "advanced", "intermediate", "basic", "basic",
                          "advanced", "advanced", "intermediate", "basic", "intermediate"};
  std::vector<std::string> replies;
  for (const char* s : script) replies.push_back(std::string("\\boxed{") + s + "}");
  backend::SequenceBackend judge(replies);
  for (int i = 0; i < 10; ++i) {
    const auto q = qa("r" + std::to_string(i), "1");
    const auto label = classify_difficulty(q, cot(q.id, "<think>t</think>1"), judge);
    EXPECT_EQ(records::to_string(label.level), script[i]);
  }
  EXPECT_EQ(judge.calls(), 10u);
}

TEST(Difficulty, BackendFailureIsJudgeUnavailable) {
  backend::FunctionBackend down([](const std::string&) -> std::string {
    throw backend::BackendUnavailable("connection refused");
  });
  EXPECT_THROW(classify_difficulty(qa("a", "1"), cot("a", "<think>t</think>1"), down), JudgeUnavailable);
}

TEST(Sampling, QuotasUseLargestRemainder) {
  const auto plan = SamplingPlan::standard(1);
  auto q = category_quotas(plan, 1000);
  EXPECT_EQ(q[Category::general], 500u);
  EXPECT_EQ(q[Category::math], 180u);
  EXPECT_EQ(q[Category::programming], 140u);
  EXPECT_EQ(q[Category::medical], 180u);
  for (std::size_t total : {1u, 7u, 33u, 101u}) {
    std::size_t sum = 0;
    for (const auto& [c, n] : category_quotas(plan, total)) {
      sum += n;
      EXPECT_LE(std::abs(static_cast<double>(n) - plan.target_shares.at(c) * total), 1.0);
    }
    EXPECT_EQ(sum, total);
  }
}

TEST(Sampling, SharesAndDeterminism) {
  const auto pool = make_pool(600, 3);
  const auto plan = SamplingPlan::standard(42);
  const auto a = sample_sft(pool, plan, 1000);
  const auto b = sample_sft(pool, plan, 1000);
  EXPECT_EQ(a, b);
  std::map<Category, int> counts;
  for (const auto& l : a) ++counts[l.record.category];
  EXPECT_NEAR(counts[Category::general], 500, 1);
  EXPECT_NEAR(counts[Category::math], 180, 1);
  EXPECT_NEAR(counts[Category::programming], 140, 1);
  EXPECT_NEAR(counts[Category::medical], 180, 1);
  std::set<std::string> ids;
  for (const auto& l : a) ids.insert(l.record.id);
  EXPECT_EQ(ids.size(), a.size());
  EXPECT_NE(sample_sft(pool, SamplingPlan::standard(43), 1000), a);
}

TEST(Sampling, HarderRecordsAreDrawnMoreOften) {
  const auto pool = make_pool(2000, 5);
  std::map<DifficultyLevel, double> drawn, available;
  for (const auto& l : pool) available[l.label.level] += 1;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (const auto& l : sample_sft(pool, SamplingPlan::standard(seed), 1000)) drawn[l.label.level] += 1;
  }
  const double basic = drawn[DifficultyLevel::basic] / available[DifficultyLevel::basic];
  const double mid = drawn[DifficultyLevel::intermediate] / available[DifficultyLevel::intermediate];
  const double adv = drawn[DifficultyLevel::advanced] / available[DifficultyLevel::advanced];
  EXPECT_LT(basic, mid);
  EXPECT_LT(mid, adv);
}

TEST(Sampling, SingleCategoryPlan) {
  const auto pool = make_pool(50, 9);
  SamplingPlan plan = SamplingPlan::standard(1);
  plan.target_shares = {{Category::math, 1.0}};
  for (const auto& l : sample_sft(pool, plan, 30)) EXPECT_EQ(l.record.category, Category::math);
}

TEST(Sampling, InsufficientCategoryReportsCounts) {
  const auto pool = make_pool(100, 9);
  try {
    sample_sft(pool, SamplingPlan::standard(1), 1000);
    FAIL() << "expected InsufficientCategory";
  } catch (const InsufficientCategory& e) {
    EXPECT_EQ(e.category(), Category::general);
    EXPECT_EQ(e.needed(), 500u);
    EXPECT_EQ(e.available(), 100u);
  }
}

TEST(RlCandidates, SpecExamples) {
  const std::vector<PassStats> stats = {{"a", 12, 3}, {"b", 12, 1}, {"c", 12, 11}, {"z", 12, 0}, {"y", 12, 12}};
  EXPECT_EQ(select_rl_candidates(stats, 2), (std::vector<std::string>{"b", "a"}));
  EXPECT_EQ(select_rl_candidates(stats, 10), (std::vector<std::string>{"b", "a", "c"}));
  EXPECT_TRUE(select_rl_candidates(stats, 0).empty());
}

TEST(RlCandidates, MatchesSortOracle) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<PassStats> stats;
    const std::size_t n = gen() % 30;
    for (std::size_t i = 0; i < n; ++i) {
      const int rollouts = 1 + static_cast<int>(gen() % 12);
      stats.push_back({"r" + std::to_string(gen() % 1000), rollouts, static_cast<int>(gen() % (rollouts + 1))});
    }
    const std::size_t k = gen() % 35;
    EXPECT_EQ(select_rl_candidates(stats, k), oracle::rl_candidates(stats, k));
  }
}

TEST(TraceThink, KeepsGivenAnswer) {
  backend::SequenceBackend gen({"<think>t</think>A"});
  const auto rec = trace_think("q1", "Q", "A", gen);
  EXPECT_EQ(rec.think, "t");
  EXPECT_EQ(rec.answer, "A");
  EXPECT_EQ(rec.source, records::CotSource::think_traced);
  EXPECT_TRUE(check_think_format(rec.response_raw).valid);
}

TEST(TraceThink, RetriesThenFails) {
  backend::SequenceBackend flaky({"no tags", "<think>ok</think>whatever"});
  EXPECT_EQ(trace_think("q", "Q", "A", flaky).think, "ok");
  EXPECT_EQ(flaky.calls(), 2u);

  backend::SequenceBackend broken({"no tags", "still none", "nope"});
  EXPECT_THROW(trace_think("q", "Q", "A", broken, 3), FormatInvalid);
  EXPECT_EQ(broken.calls(), 3u);

  backend::FunctionBackend down([](const std::string&) -> std::string {
    throw backend::BackendUnavailable("down");
  });
  EXPECT_THROW(trace_think("q", "Q", "A", down), GeneratorUnavailable);
}

TEST(TraceThink, BatchOfFiveIsFormatValid) {
  backend::FunctionBackend gen([](const std::string& p) { return "<think>reasoning for " + p.substr(0, 10) + "</think>x"; });
  for (int i = 0; i < 5; ++i) {
    const std::string ans = "\\boxed{" + std::to_string(i) + "}";
    const auto rec = trace_think("q" + std::to_string(i), "Q" + std::to_string(i), ans, gen);
    EXPECT_TRUE(check_think_format(rec.response_raw).valid);
    EXPECT_EQ(rec.answer, ans);
  }
}
