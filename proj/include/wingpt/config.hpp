#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "wingpt/common.hpp"
#include "wingpt/curation.hpp"
#include "wingpt/grpo.hpp"
#include "wingpt/policy.hpp"
#include "wingpt/prefmodel.hpp"
#include "wingpt/verify.hpp"

// Run configuration: a small TOML subset (sections, key = value, quoted
// strings, numbers, booleans, # comments) mapped onto the module configs.
namespace wingpt::config {

class ConfigError : public Error {
 public:
  ConfigError(const std::string& key, const std::string& message);
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct Value {
  enum class Type { string, number, boolean };
  Type type = Type::string;
  std::string text;  // unquoted string, number literal, or "true"/"false"
};

// Flattened "section.key" -> value. Later assignments replace earlier ones.
using Document = std::map<std::string, Value>;

Document parse_document(std::string_view contents);
// "section.key=value"; an unquoted value that is neither a number nor a
// boolean is taken as a string.
void apply_override(Document& doc, std::string_view assignment);

struct DiagSettings {
  int max_turns = 5;
  std::string synonyms;  // optional path
};

struct JudgeSettings {
  int max_attempts = 3;
  std::size_t workers = 4;
};

struct CurateSettings {
  double unverifiable_fraction = 0.5;
  std::size_t rl_k = 0;  // 0 keeps every surviving candidate
  std::size_t sample_total = 0;  // 0 means the whole pool
  int trace_attempts = 3;
};

struct TaskSettings {
  std::string kind = "add1";
  std::size_t count = 200;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int policy_order = 2;
  curation::NgramFilterConfig filter;
  curation::SamplingPlan sampling = curation::SamplingPlan::standard(0);
  CurateSettings curate;
  verify::LengthPenaltyConfig length;
  prefmodel::BtConfig rm;
  policy::SftConfig sft;
  grpo::GrpoConfig grpo;
  TaskSettings tasks;
  DiagSettings diagchain;
  JudgeSettings judge;
  std::size_t eval_workers = 1;

  // Copies the global seed into every module config and validates each one.
  void finalize();
};

// Unknown keys and ill-typed values raise ConfigError naming the key.
RunConfig build_config(const Document& doc);
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

// Canonical rendering of every setting; stable input for hashing.
std::string to_toml(const RunConfig& cfg);

}  // namespace wingpt::config
