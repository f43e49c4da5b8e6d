#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "wingpt/cli.hpp"

using namespace wingpt;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Outcome o;
  o.code = cli::run(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::string write_config(const std::filesystem::path& dir, const std::string& body) {
  const std::string path = (dir / "run.toml").string();
  std::ofstream(path) << body;
  return path;
}

}  // namespace

TEST(Cli, NoArgumentsIsUsageError) {
  const auto o = run({});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE((o.out + o.err).find("Usage"), std::string::npos);
}

TEST(Cli, HelpAndVersion) {
  const auto h = run({"--help"});
  EXPECT_EQ(h.code, 0);
  for (const char* cmd : {"curate", "train", "merge", "simulate", "eval"}) {
    EXPECT_NE(h.out.find(cmd), std::string::npos) << cmd;
  }
  const auto v = run({"--version"});
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.out.find(std::string(cli::kVersion)), std::string::npos);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
}

TEST(Cli, FilterMatchesGoldenAndWritesManifest) {
  const auto dir = oracle::scratch_dir("cli-filter");
  const std::string cfg = write_config(dir, "[filter]\nn = 4\nmax_repeat_ratio = 0.3\n");
  const std::string out = (dir / "kept.cot.jsonl").string();
  const std::string rejected = (dir / "rejected.jsonl").string();
  const auto o = run({"--config", cfg, "curate", "filter", "--in", oracle::fixture("curation/planted.cot.jsonl"),
                      "--out", out, "--rejected", rejected});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(read_file(out), read_file(oracle::fixture("curation/planted.kept.golden.jsonl")));

  std::istringstream rej(read_file(rejected));
  std::size_t n = 0;
  for (std::string line; std::getline(rej, line);) ++n;
  EXPECT_EQ(n, 7u);

  const auto m = nlohmann::json::parse(read_file(out + ".manifest.json"));
  EXPECT_EQ(m.at("command"), "curate filter");
  EXPECT_EQ(m.at("version"), std::string(cli::kVersion));
  EXPECT_EQ(m.at("inputs").at("planted.cot.jsonl"),
            sha256_hex(read_file(oracle::fixture("curation/planted.cot.jsonl"))));
  EXPECT_EQ(m.at("outputs").at("kept.cot.jsonl"), sha256_hex(read_file(out)));
  EXPECT_EQ(m.at("config_sha256").get<std::string>().size(), 64u);

  for (const auto& line : std::vector<std::string>{o.err.substr(0, o.err.find('\n'))}) {
    EXPECT_NO_THROW(nlohmann::json::parse(line));
  }
}

TEST(Cli, InvalidConfigKeyExitsOneNamingKey) {
  const auto dir = oracle::scratch_dir("cli-badkey");
  const std::string cfg = write_config(dir, "[filter]\nngram = 4\n");
  const auto o = run({"--config", cfg, "curate", "filter", "--in", oracle::fixture("curation/planted.cot.jsonl"),
                      "--out", (dir / "x.jsonl").string()});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("filter.ngram"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(dir / "x.jsonl"));

  const auto s = run({"--set", "grpo.nope=1", "curate", "filter", "--in",
                      oracle::fixture("curation/planted.cot.jsonl"), "--out", (dir / "y.jsonl").string()});
  EXPECT_EQ(s.code, 1);
  EXPECT_NE(s.err.find("grpo.nope"), std::string::npos);
}

TEST(Cli, MissingInputIsValidationError) {
  const auto dir = oracle::scratch_dir("cli-missing");
  const auto o = run({"curate", "filter", "--in", (dir / "nope.jsonl").string(), "--out", (dir / "o.jsonl").string()});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("no such file"), std::string::npos);
}

TEST(Cli, SimulateDiagchainMatchesGoldens) {
  const auto dir = oracle::scratch_dir("cli-diag");
  const std::string out = (dir / "episodes.jsonl").string();
  const auto o = run({"simulate", "diagchain", "--emr", oracle::fixture("diagchain/cases.emr.jsonl"), "--agent",
                      "script:" + oracle::fixture("diagchain/scripts.json"), "--judge",
                      "mock:" + oracle::fixture("diagchain/judge_mock.json"), "--out", out});
  ASSERT_EQ(o.code, 0) << o.err;
  std::string expected;
  for (int i = 1; i <= 10; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "emr-%03d", i);
    expected += read_file(oracle::fixture(std::string("diagchain/golden_") + id + ".jsonl"));
  }
  EXPECT_EQ(read_file(out), expected);
}

TEST(Cli, SelectRlOrdersCandidates) {
  const auto dir = oracle::scratch_dir("cli-rl");
  const std::string in = (dir / "pass.stats.jsonl").string();
  std::ofstream(in) << R"({"n_correct":3,"n_rollouts":12,"record_id":"a"})" << "\n"
                    << R"({"n_correct":1,"n_rollouts":12,"record_id":"b"})" << "\n"
                    << R"({"n_correct":11,"n_rollouts":12,"record_id":"c"})" << "\n"
                    << R"({"n_correct":12,"n_rollouts":12,"record_id":"d"})" << "\n";
  const std::string out = (dir / "rl.txt").string();
  const auto o = run({"curate", "select-rl", "--in", in, "--out", out, "--k", "2"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(read_file(out), "b\na\n");
}

TEST(Cli, EvalWithOracleBackend) {
  const auto dir = oracle::scratch_dir("cli-eval");
  const std::string out = (dir / "report.jsonl").string();
  const std::string table = (dir / "table.txt").string();
  const auto o = run({"eval", "run", "--bench", oracle::fixture("bench/mcq.bench.jsonl"), "--bench",
                      oracle::fixture("bench/multi.bench.jsonl"), "--backend", "oracle", "--out", out, "--table",
                      table});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(read_file(table).find("100.0"), std::string::npos);
  EXPECT_NE(read_file(table).find("micro_f1"), std::string::npos);
}
