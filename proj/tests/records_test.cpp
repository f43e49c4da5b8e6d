#include <gtest/gtest.h>

#include "oracles.hpp"
#include "wingpt/records.hpp"

using namespace wingpt;
using namespace wingpt::records;

namespace {

QaRecord qa(const std::string& id) {
  QaRecord r;
  r.id = id;
  r.question = "What is " + id + "?";
  r.gold_answer = "42";
  r.category = Category::math;
  r.verifiability = Verifiability::verifiable;
  r.subkind = "medical calculation";
  return r;
}

std::string random_text(Rng& rng) {
  static const std::vector<std::string> pieces = {"a", "B", " ", "\"", "\\", "\n", "\t", "é", "头", "{", "}", "<think>", "0"};
  std::string s;
  const auto n = rng.below(12);
  for (std::uint64_t i = 0; i < n; ++i) s += pieces[rng.below(pieces.size())];
  return s;
}

}  // namespace

TEST(Records, ThreeValidLinesParse) {
  const std::string data = to_jsonl(std::vector<QaRecord>{qa("a"), qa("b"), qa("c")});
  EXPECT_EQ(parse_jsonl<QaRecord>(data).size(), 3u);
}

TEST(Records, MissingQuestionIsSchemaViolationAtThatLine) {
  const std::string data =
      to_jsonl(std::vector<QaRecord>{qa("a")}) +
      R"({"category":"math","gold_answer":"1","id":"b","language":"en","subkind":"","verifiability":"verifiable"})" "\n";
  try {
    parse_jsonl<QaRecord>(data);
    FAIL() << "expected SchemaViolation";
  } catch (const SchemaViolation& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.field(), "question");
  }
}

TEST(Records, BadJsonIsMalformedLine) {
  try {
    parse_jsonl<QaRecord>(to_jsonl(std::vector<QaRecord>{qa("a")}) + "{not json\n");
    FAIL();
  } catch (const MalformedLine& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Records, UnknownFieldRejected) {
  auto j = to_json(qa("a"));
  j["extra"] = 1;
  EXPECT_THROW(parse_jsonl<QaRecord>(j.dump() + "\n"), SchemaViolation);
}

TEST(Records, VerifiableNeedsGold) {
  QaRecord r = qa("a");
  r.gold_answer.reset();
  EXPECT_EQ(validate(r), "gold_answer");
  r.verifiability = Verifiability::unverifiable;
  EXPECT_FALSE(validate(r));
}

TEST(Records, DuplicateIdsRejected) {
  EXPECT_THROW(parse_jsonl<QaRecord>(to_jsonl(std::vector<QaRecord>{qa("a"), qa("a")})), SchemaViolation);
}

TEST(Records, PreferencePairInvariants) {
  PreferencePair p{"prompt", "x", "x", std::nullopt};
  EXPECT_EQ(validate(p), "rejected");
  p.rejected = "y";
  p.magnitude = 0.0;
  EXPECT_EQ(validate(p), "magnitude");
  p.magnitude = 2.0;
  EXPECT_FALSE(validate(p));
}

TEST(Records, PassStatsInvariants) {
  EXPECT_EQ(validate(PassStats{"a", 12, 13}), "n_correct");
  EXPECT_EQ(validate(PassStats{"a", 0, 0}), "n_rollouts");
  EXPECT_FALSE(validate(PassStats{"a", 12, 0}));
}

TEST(Records, EmrKeysNormalizedOnLoad) {
  const std::string line =
      R"({"auxiliary_tests":{"Chest  X-Ray":"clear"},"case_id":"c1","chief_complaint":"cc","final_diagnosis":"dx",)"
      R"("medical_history":"mh","physical_exam":{" Heart Rate ":"80"},"present_illness":"pi"})" "\n";
  const auto cases = parse_jsonl<EmrCase>(line);
  ASSERT_EQ(cases.size(), 1u);
  EXPECT_EQ(cases[0].auxiliary_tests.count("chest x-ray"), 1u);
  EXPECT_EQ(cases[0].physical_exam.count("heart rate"), 1u);
}

TEST(Records, EmrKeyCollisionRejected) {
  const std::string line =
      R"({"auxiliary_tests":{"ECG":"a","ecg":"b"},"case_id":"c1","chief_complaint":"cc","final_diagnosis":"dx",)"
      R"("medical_history":"mh","physical_exam":{},"present_illness":"pi"})" "\n";
  EXPECT_THROW(parse_jsonl<EmrCase>(line), SchemaViolation);
}

TEST(Records, EmptyDiagnosisRejected) {
  EmrCase c;
  c.case_id = "c";
  c.final_diagnosis = "  ";
  EXPECT_EQ(validate(c), "final_diagnosis");
}

TEST(Records, KeysAreAlphabetical) {
  const std::string line = to_jsonl(std::vector<PassStats>{{"r1", 12, 3}});
  EXPECT_EQ(line, "{\"n_correct\":3,\"n_rollouts\":12,\"record_id\":\"r1\"}\n");
}

TEST(Records, EmptyWriteGivesEmptyFile) {
  const auto dir = oracle::scratch_dir("records-empty");
  const std::string path = (dir / "x.qa.jsonl").string();
  EXPECT_EQ(write_jsonl(std::vector<QaRecord>{}, path), 0u);
  EXPECT_EQ(read_file(path), "");
  EXPECT_TRUE(read_jsonl<QaRecord>(path).empty());
}

TEST(Records, MissingFileIsIoFailure) { EXPECT_THROW(read_jsonl<QaRecord>("/nonexistent/x.qa.jsonl"), IoFailure); }

TEST(Records, SuffixConvention) {
  EXPECT_EQ(kind_from_path("a/b.qa.jsonl"), RecordKind::qa);
  EXPECT_EQ(kind_from_path("b.cot.jsonl"), RecordKind::cot);
  EXPECT_EQ(kind_from_path("b.pref.jsonl"), RecordKind::pref);
  EXPECT_EQ(kind_from_path("b.emr.jsonl"), RecordKind::emr);
  EXPECT_FALSE(kind_from_path("b.jsonl"));
}

TEST(Records, RandomRoundTripIsIdentityAndByteStable) {
  Rng rng(99);
  std::vector<QaRecord> qas;
  std::vector<CotRecord> cots;
  std::vector<PreferencePair> prefs;
  for (int i = 0; i < 100; ++i) {
    QaRecord q;
    q.id = "id" + std::to_string(i);
    q.question = "q" + random_text(rng);
    if (rng.below(2)) q.gold_answer = random_text(rng) + "g";
    q.category = static_cast<Category>(rng.below(4));
    q.language = static_cast<Language>(rng.below(2));
    q.verifiability = q.gold_answer && rng.below(2) ? Verifiability::verifiable : Verifiability::unverifiable;
    q.subkind = random_text(rng);
    qas.push_back(q);
    cots.push_back(CotRecord::from_parts(q.id, random_text(rng), random_text(rng),
                                         static_cast<CotSource>(rng.below(3))));
    PreferencePair p{"p" + random_text(rng), "c" + random_text(rng), "r" + random_text(rng), std::nullopt};
    if (rng.below(2)) p.magnitude = 0.5 + rng.uniform();
    prefs.push_back(p);
  }
  const auto dir = oracle::scratch_dir("records-roundtrip");
  const std::string a = (dir / "a.qa.jsonl").string(), b = (dir / "b.qa.jsonl").string();
  EXPECT_EQ(write_jsonl(qas, a), 100u);
  write_jsonl(qas, b);
  EXPECT_EQ(read_jsonl<QaRecord>(a), qas);
  EXPECT_EQ(sha256_hex(read_file(a)), sha256_hex(read_file(b)));
  EXPECT_EQ(parse_jsonl<CotRecord>(to_jsonl(cots)), cots);
  EXPECT_EQ(parse_jsonl<PreferencePair>(to_jsonl(prefs)), prefs);
}

TEST(Records, CrLfTolerated) {
  std::string data = to_jsonl(std::vector<QaRecord>{qa("a")});
  data.insert(data.size() - 1, "\r");
  EXPECT_EQ(parse_jsonl<QaRecord>(data).size(), 1u);
}
