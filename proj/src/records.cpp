#include "wingpt/records.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace wingpt::records {

using nlohmann::json;

namespace {

template <typename E, std::size_t N>
std::optional<E> lookup(std::string_view s, const std::pair<E, std::string_view> (&table)[N]) {
  for (const auto& [e, name] : table) {
    if (name == s) return e;
  }
  return std::nullopt;
}

template <typename E, std::size_t N>
std::string_view name_of(E e, const std::pair<E, std::string_view> (&table)[N]) {
  for (const auto& [v, name] : table) {
    if (v == e) return name;
  }
  return "?";
}

constexpr std::pair<Category, std::string_view> kCategoryNames[] = {
    {Category::general, "general"},
    {Category::math, "math"},
    {Category::programming, "programming"},
    {Category::medical, "medical"}};
constexpr std::pair<Language, std::string_view> kLanguageNames[] = {{Language::zh, "zh"},
                                                                    {Language::en, "en"}};
constexpr std::pair<Verifiability, std::string_view> kVerifiabilityNames[] = {
    {Verifiability::verifiable, "verifiable"}, {Verifiability::unverifiable, "unverifiable"}};
constexpr std::pair<CotSource, std::string_view> kSourceNames[] = {
    {CotSource::distilled, "distilled"},
    {CotSource::think_traced, "think_traced"},
    {CotSource::policy_sampled, "policy_sampled"}};
constexpr std::pair<DifficultyLevel, std::string_view> kLevelNames[] = {
    {DifficultyLevel::basic, "basic"},
    {DifficultyLevel::intermediate, "intermediate"},
    {DifficultyLevel::advanced, "advanced"}};
constexpr std::pair<RecordKind, std::string_view> kKindNames[] = {
    {RecordKind::qa, "qa"},           {RecordKind::cot, "cot"},
    {RecordKind::pref, "pref"},       {RecordKind::emr, "emr"},
    {RecordKind::labeled, "labeled"}, {RecordKind::stats, "stats"}};

// Strict object reader: every accessed key is tracked and leftovers are rejected.
class ObjectReader {
 public:
  explicit ObjectReader(const json& j) : j_(j) {
    if (!j_.is_object()) throw SchemaViolation(0, "<root>", "expected a JSON object");
  }

  std::string str(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || !it->is_string()) throw SchemaViolation(0, key, "missing or not a string");
    return it->get<std::string>();
  }

  std::optional<std::string> opt_str(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw SchemaViolation(0, key, "not a string");
    return it->get<std::string>();
  }

  std::optional<double> opt_num(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) throw SchemaViolation(0, key, "not a number");
    return it->get<double>();
  }

  long long integer(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || !it->is_number_integer()) throw SchemaViolation(0, key, "missing or not an integer");
    return it->get<long long>();
  }

  const json& object(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || !it->is_object()) throw SchemaViolation(0, key, "missing or not an object");
    return *it;
  }

  template <typename E>
  E enumeration(const std::string& key, std::optional<E> (*parse)(std::string_view)) {
    auto s = str(key);
    auto v = parse(s);
    if (!v) throw SchemaViolation(0, key, "unknown value '" + s + "'");
    return *v;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw SchemaViolation(0, it.key(), "unknown field");
    }
  }

 private:
  const json& j_;
  std::set<std::string> seen_;
};

std::map<std::string, std::string> read_exam_map(const json& j, const std::string& field) {
  std::vector<std::pair<std::string, std::string>> entries;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it->is_string()) throw SchemaViolation(0, field, "finding must be a string");
    entries.emplace_back(it.key(), it->get<std::string>());
  }
  return make_exam_map(entries, field);
}

void require_valid(const std::optional<std::string>& violation) {
  if (violation) throw SchemaViolation(0, *violation, "invariant violated");
}

bool is_normalized_map(const std::map<std::string, std::string>& m) {
  for (const auto& [k, v] : m) {
    if (k.empty() || normalize_key(k) != k) return false;
  }
  return true;
}

}  // namespace

std::string_view to_string(Category c) { return name_of(c, kCategoryNames); }
std::string_view to_string(Language l) { return name_of(l, kLanguageNames); }
std::string_view to_string(Verifiability v) { return name_of(v, kVerifiabilityNames); }
std::string_view to_string(CotSource s) { return name_of(s, kSourceNames); }
std::string_view to_string(DifficultyLevel l) { return name_of(l, kLevelNames); }
std::string_view to_string(RecordKind k) { return name_of(k, kKindNames); }

std::optional<Category> parse_category(std::string_view s) { return lookup(s, kCategoryNames); }
std::optional<Language> parse_language(std::string_view s) { return lookup(s, kLanguageNames); }
std::optional<Verifiability> parse_verifiability(std::string_view s) {
  return lookup(s, kVerifiabilityNames);
}
std::optional<CotSource> parse_cot_source(std::string_view s) { return lookup(s, kSourceNames); }
std::optional<DifficultyLevel> parse_level(std::string_view s) { return lookup(s, kLevelNames); }
std::optional<RecordKind> parse_kind(std::string_view s) { return lookup(s, kKindNames); }

std::optional<RecordKind> kind_from_path(std::string_view path) {
  for (const auto& [kind, name] : kKindNames) {
    std::string suffix = "." + std::string(name) + ".jsonl";
    if (path.size() >= suffix.size() && path.substr(path.size() - suffix.size()) == suffix) {
      return kind;
    }
  }
  return std::nullopt;
}

CotRecord CotRecord::from_parts(std::string record_id, std::string think, std::string answer,
                                CotSource source) {
  CotRecord r;
  r.record_id = std::move(record_id);
  r.response_raw = "<think>" + think + "</think>" + answer;
  r.think = std::move(think);
  r.answer = std::move(answer);
  r.source = source;
  return r;
}

std::string normalize_key(std::string_view name) { return text::normalize(name); }

std::map<std::string, std::string> make_exam_map(
    const std::vector<std::pair<std::string, std::string>>& entries, std::string_view field) {
  std::map<std::string, std::string> out;
  for (const auto& [name, finding] : entries) {
    std::string key = normalize_key(name);
    if (key.empty()) throw SchemaViolation(0, std::string(field), "empty exam name");
    if (!out.emplace(key, finding).second) {
      throw SchemaViolation(0, std::string(field), "duplicate exam name after normalization: " + key);
    }
  }
  return out;
}

MalformedLine::MalformedLine(std::size_t line, const std::string& detail)
    : Error("malformed JSONL at line " + std::to_string(line) + ": " + detail), line_(line) {}

SchemaViolation::SchemaViolation(std::size_t line, std::string field, const std::string& detail)
    : Error("schema violation at line " + std::to_string(line) + ", field '" + field + "'" +
            (detail.empty() ? "" : ": " + detail)),
      line_(line),
      field_(std::move(field)),
      detail_(detail) {}

std::optional<std::string> validate(const QaRecord& r) {
  if (r.id.empty()) return "id";
  if (r.question.empty()) return "question";
  if (r.verifiability == Verifiability::verifiable && (!r.gold_answer || r.gold_answer->empty())) {
    return "gold_answer";
  }
  return std::nullopt;
}

std::optional<std::string> validate(const CotRecord& r) {
  if (r.record_id.empty()) return "record_id";
  return std::nullopt;
}

std::optional<std::string> validate(const DifficultyLabel&) { return std::nullopt; }

std::optional<std::string> validate(const LabeledQa& r) {
  if (auto v = validate(r.record)) return v;
  return validate(r.label);
}

std::optional<std::string> validate(const PreferencePair& r) {
  if (r.chosen == r.rejected) return "rejected";
  if (r.magnitude && !(std::isfinite(*r.magnitude) && *r.magnitude > 0.0)) return "magnitude";
  return std::nullopt;
}

std::optional<std::string> validate(const EmrCase& r) {
  if (r.case_id.empty()) return "case_id";
  if (text::trim(r.final_diagnosis).empty()) return "final_diagnosis";
  if (!is_normalized_map(r.physical_exam)) return "physical_exam";
  if (!is_normalized_map(r.auxiliary_tests)) return "auxiliary_tests";
  return std::nullopt;
}

std::optional<std::string> validate(const PassStats& r) {
  if (r.record_id.empty()) return "record_id";
  if (r.n_rollouts <= 0) return "n_rollouts";
  if (r.n_correct < 0 || r.n_correct > r.n_rollouts) return "n_correct";
  return std::nullopt;
}

json to_json(const QaRecord& r) {
  json j;
  j["id"] = r.id;
  j["question"] = r.question;
  if (r.gold_answer) j["gold_answer"] = *r.gold_answer;
  j["category"] = to_string(r.category);
  j["language"] = to_string(r.language);
  j["verifiability"] = to_string(r.verifiability);
  j["subkind"] = r.subkind;
  return j;
}

json to_json(const CotRecord& r) {
  return json{{"record_id", r.record_id},
              {"response_raw", r.response_raw},
              {"think", r.think},
              {"answer", r.answer},
              {"source", to_string(r.source)}};
}

json to_json(const DifficultyLabel& r) {
  return json{{"level", to_string(r.level)}, {"rationale", r.rationale}};
}

json to_json(const LabeledQa& r) {
  return json{{"record", to_json(r.record)}, {"label", to_json(r.label)}};
}

json to_json(const PreferencePair& r) {
  json j{{"prompt", r.prompt}, {"chosen", r.chosen}, {"rejected", r.rejected}};
  if (r.magnitude) j["magnitude"] = *r.magnitude;
  return j;
}

json to_json(const EmrCase& r) {
  return json{{"case_id", r.case_id},
              {"chief_complaint", r.chief_complaint},
              {"present_illness", r.present_illness},
              {"medical_history", r.medical_history},
              {"physical_exam", r.physical_exam},
              {"auxiliary_tests", r.auxiliary_tests},
              {"final_diagnosis", r.final_diagnosis}};
}

json to_json(const PassStats& r) {
  return json{{"record_id", r.record_id}, {"n_rollouts", r.n_rollouts}, {"n_correct", r.n_correct}};
}

template <>
QaRecord from_json<QaRecord>(const json& j) {
  ObjectReader in(j);
  QaRecord r;
  r.id = in.str("id");
  r.question = in.str("question");
  r.gold_answer = in.opt_str("gold_answer");
  r.category = in.enumeration("category", &parse_category);
  r.language = in.enumeration("language", &parse_language);
  r.verifiability = in.enumeration("verifiability", &parse_verifiability);
  r.subkind = in.str("subkind");
  in.finish();
  require_valid(validate(r));
  return r;
}

template <>
CotRecord from_json<CotRecord>(const json& j) {
  ObjectReader in(j);
  CotRecord r;
  r.record_id = in.str("record_id");
  r.response_raw = in.str("response_raw");
  r.think = in.str("think");
  r.answer = in.str("answer");
  r.source = in.enumeration("source", &parse_cot_source);
  in.finish();
  require_valid(validate(r));
  return r;
}

template <>
DifficultyLabel from_json<DifficultyLabel>(const json& j) {
  ObjectReader in(j);
  DifficultyLabel r;
  r.level = in.enumeration("level", &parse_level);
  r.rationale = in.str("rationale");
  in.finish();
  return r;
}

template <>
LabeledQa from_json<LabeledQa>(const json& j) {
  ObjectReader in(j);
  LabeledQa r;
  r.record = from_json<QaRecord>(in.object("record"));
  r.label = from_json<DifficultyLabel>(in.object("label"));
  in.finish();
  return r;
}

template <>
PreferencePair from_json<PreferencePair>(const json& j) {
  ObjectReader in(j);
  PreferencePair r;
  r.prompt = in.str("prompt");
  r.chosen = in.str("chosen");
  r.rejected = in.str("rejected");
  r.magnitude = in.opt_num("magnitude");
  in.finish();
  require_valid(validate(r));
  return r;
}

template <>
EmrCase from_json<EmrCase>(const json& j) {
  ObjectReader in(j);
  EmrCase r;
  r.case_id = in.str("case_id");
  r.chief_complaint = in.str("chief_complaint");
  r.present_illness = in.str("present_illness");
  r.medical_history = in.str("medical_history");
  r.physical_exam = read_exam_map(in.object("physical_exam"), "physical_exam");
  r.auxiliary_tests = read_exam_map(in.object("auxiliary_tests"), "auxiliary_tests");
  r.final_diagnosis = in.str("final_diagnosis");
  in.finish();
  require_valid(validate(r));
  return r;
}

template <>
PassStats from_json<PassStats>(const json& j) {
  ObjectReader in(j);
  PassStats r;
  r.record_id = in.str("record_id");
  r.n_rollouts = static_cast<int>(in.integer("n_rollouts"));
  r.n_correct = static_cast<int>(in.integer("n_correct"));
  in.finish();
  require_valid(validate(r));
  return r;
}

namespace {

// Dataset-level uniqueness key; empty means "no uniqueness constraint".
std::pair<std::string, std::string> unique_key(const QaRecord& r) { return {"id", r.id}; }
std::pair<std::string, std::string> unique_key(const LabeledQa& r) { return {"record", r.record.id}; }
std::pair<std::string, std::string> unique_key(const EmrCase& r) { return {"case_id", r.case_id}; }
template <typename T>
std::pair<std::string, std::string> unique_key(const T&) {
  return {};
}

}  // namespace

template <typename T>
std::string to_jsonl(const std::vector<T>& records) {
  std::string out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (auto v = validate(records[i])) throw SchemaViolation(i + 1, *v, "record does not validate");
    auto [field, key] = unique_key(records[i]);
    if (!field.empty() && !seen.insert(key).second) {
      throw SchemaViolation(i + 1, field, "duplicate id '" + key + "'");
    }
    try {
      out += to_json(records[i]).dump();
    } catch (const json::exception& e) {
      throw IoFailure(std::string("cannot encode record: ") + e.what());
    }
    out.push_back('\n');
  }
  return out;
}

template <typename T>
std::vector<T> parse_jsonl(std::string_view contents) {
  std::vector<T> out;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < contents.size()) {
    std::size_t end = contents.find('\n', pos);
    if (end == std::string_view::npos) end = contents.size();
    std::string_view line = contents.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) throw MalformedLine(line_no, "empty line");
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw MalformedLine(line_no, e.what());
    }
    try {
      T rec = from_json<T>(j);
      auto [field, key] = unique_key(rec);
      if (!field.empty() && !seen.insert(key).second) {
        throw SchemaViolation(0, field, "duplicate id '" + key + "'");
      }
      out.push_back(std::move(rec));
    } catch (const SchemaViolation& e) {
      throw SchemaViolation(line_no, e.field(), e.detail());
    }
  }
  return out;
}

template <typename T>
std::vector<T> read_jsonl(const std::string& path) {
  std::string contents;
  try {
    contents = read_file(path);
  } catch (const Error& e) {
    throw IoFailure(e.what());
  }
  return parse_jsonl<T>(contents);
}

template <typename T>
std::size_t write_jsonl(const std::vector<T>& records, const std::string& path) {
  const std::string contents = to_jsonl(records);
  try {
    write_file(path, contents);
  } catch (const Error& e) {
    throw IoFailure(e.what());
  }
  return records.size();
}

#define WINGPT_INSTANTIATE(T)                                           \
  template std::string to_jsonl<T>(const std::vector<T>&);              \
  template std::vector<T> parse_jsonl<T>(std::string_view);             \
  template std::vector<T> read_jsonl<T>(const std::string&);            \
  template std::size_t write_jsonl<T>(const std::vector<T>&, const std::string&);

WINGPT_INSTANTIATE(QaRecord)
WINGPT_INSTANTIATE(CotRecord)
WINGPT_INSTANTIATE(LabeledQa)
WINGPT_INSTANTIATE(PreferencePair)
WINGPT_INSTANTIATE(EmrCase)
WINGPT_INSTANTIATE(PassStats)

#undef WINGPT_INSTANTIATE

}  // namespace wingpt::records
