#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "wingpt/common.hpp"

namespace wingpt::records {

enum class Category { general, math, programming, medical };
enum class Language { zh, en };
enum class Verifiability { verifiable, unverifiable };
enum class CotSource { distilled, think_traced, policy_sampled };
enum class DifficultyLevel { basic, intermediate, advanced };

inline constexpr Category kAllCategories[] = {Category::general, Category::math,
                                              Category::programming, Category::medical};
inline constexpr DifficultyLevel kAllLevels[] = {
    DifficultyLevel::basic, DifficultyLevel::intermediate, DifficultyLevel::advanced};

std::string_view to_string(Category c);
std::string_view to_string(Language l);
std::string_view to_string(Verifiability v);
std::string_view to_string(CotSource s);
std::string_view to_string(DifficultyLevel l);

std::optional<Category> parse_category(std::string_view s);
std::optional<Language> parse_language(std::string_view s);
std::optional<Verifiability> parse_verifiability(std::string_view s);
std::optional<CotSource> parse_cot_source(std::string_view s);
std::optional<DifficultyLevel> parse_level(std::string_view s);

struct QaRecord {
  std::string id;
  std::string question;
  std::optional<std::string> gold_answer;
  Category category = Category::general;
  Language language = Language::en;
  Verifiability verifiability = Verifiability::unverifiable;
  std::string subkind;

  bool operator==(const QaRecord&) const = default;
};

struct CotRecord {
  std::string record_id;
  std::string response_raw;
  std::string think;
  std::string answer;
  CotSource source = CotSource::distilled;

  // "<think>" + think + "</think>" + answer
  static CotRecord from_parts(std::string record_id, std::string think, std::string answer,
                              CotSource source);

  bool operator==(const CotRecord&) const = default;
};

struct DifficultyLabel {
  DifficultyLevel level = DifficultyLevel::basic;
  std::string rationale;

  bool operator==(const DifficultyLabel&) const = default;
};

// A question together with its difficulty label; the unit sample_sft draws from.
struct LabeledQa {
  QaRecord record;
  DifficultyLabel label;

  bool operator==(const LabeledQa&) const = default;
};

struct PreferencePair {
  std::string prompt;
  std::string chosen;
  std::string rejected;
  std::optional<double> magnitude;

  bool operator==(const PreferencePair&) const = default;
};

// Keys of both maps are normalized (see normalize_key).
struct EmrCase {
  std::string case_id;
  std::string chief_complaint;
  std::string present_illness;
  std::string medical_history;
  std::map<std::string, std::string> physical_exam;
  std::map<std::string, std::string> auxiliary_tests;
  std::string final_diagnosis;

  bool operator==(const EmrCase&) const = default;
};

struct PassStats {
  std::string record_id;
  int n_rollouts = 0;
  int n_correct = 0;

  bool operator==(const PassStats&) const = default;
};

// Case-folded, whitespace-collapsed form used for exam/test names.
std::string normalize_key(std::string_view name);

// Builds a normalized exam map; throws SchemaViolation(0, field) on collisions.
std::map<std::string, std::string> make_exam_map(
    const std::vector<std::pair<std::string, std::string>>& entries,
    std::string_view field = "physical_exam");

// Errors. Line numbers are 1-based; 0 means "not from a file".
class MalformedLine : public Error {
 public:
  MalformedLine(std::size_t line, const std::string& detail);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class SchemaViolation : public Error {
 public:
  SchemaViolation(std::size_t line, std::string field, const std::string& detail = {});
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }
  const std::string& detail() const { return detail_; }

 private:
  std::size_t line_;
  std::string field_;
  std::string detail_;
};

class IoFailure : public Error {
 public:
  using Error::Error;
};

// Returns the name of the first violated field, if any.
std::optional<std::string> validate(const QaRecord& r);
std::optional<std::string> validate(const CotRecord& r);
std::optional<std::string> validate(const DifficultyLabel& r);
std::optional<std::string> validate(const LabeledQa& r);
std::optional<std::string> validate(const PreferencePair& r);
std::optional<std::string> validate(const EmrCase& r);
std::optional<std::string> validate(const PassStats& r);

// JSON conversion. from_json throws SchemaViolation with line 0.
nlohmann::json to_json(const QaRecord& r);
nlohmann::json to_json(const CotRecord& r);
nlohmann::json to_json(const DifficultyLabel& r);
nlohmann::json to_json(const LabeledQa& r);
nlohmann::json to_json(const PreferencePair& r);
nlohmann::json to_json(const EmrCase& r);
nlohmann::json to_json(const PassStats& r);

template <typename T>
T from_json(const nlohmann::json& j);

enum class RecordKind { qa, cot, pref, emr, labeled, stats };

std::string_view to_string(RecordKind k);
std::optional<RecordKind> parse_kind(std::string_view s);
// From the suffix convention: .qa.jsonl, .cot.jsonl, .pref.jsonl, .emr.jsonl,
// .labeled.jsonl, .stats.jsonl.
std::optional<RecordKind> kind_from_path(std::string_view path);

// One compact JSON object per line, keys in alphabetical order.
template <typename T>
std::string to_jsonl(const std::vector<T>& records);

template <typename T>
std::vector<T> parse_jsonl(std::string_view contents);

template <typename T>
std::vector<T> read_jsonl(const std::string& path);

template <typename T>
std::size_t write_jsonl(const std::vector<T>& records, const std::string& path);

}  // namespace wingpt::records
