#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "wingpt/backend.hpp"
#include "wingpt/common.hpp"

namespace wingpt::evalbench {

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyBenchmark : public Error {
 public:
  using Error::Error;
};

class InvalidItem : public Error {
 public:
  using Error::Error;
};

struct ExactAnswer {
  std::string gold;
};

struct BoundsAnswer {
  double lower = 0.0;
  double upper = 0.0;
};

struct ChoicesAnswer {
  std::set<std::string> gold;
  std::vector<std::string> options;
};

using AnswerSpec = std::variant<ExactAnswer, BoundsAnswer, ChoicesAnswer>;

struct BenchItem {
  std::string id;
  std::string prompt;
  AnswerSpec answer;

  void validate() const;
};

using OptionSet = std::set<std::string>;

// Pooled over every option of every item.
double micro_f1(const std::vector<OptionSet>& predictions, const std::vector<OptionSet>& golds);
double accuracy_exact(const std::vector<std::string>& extracted, const std::vector<std::string>& golds);
// A missing value counts as incorrect.
double accuracy_bounds(const std::vector<std::optional<double>>& values, const std::vector<BoundsAnswer>& bounds);

// Boxed content wins: every option id found in it, split on commas, spaces,
// semicolons, and slashes. Otherwise the last standalone capital-letter token
// that names an option. Empty when nothing matches.
OptionSet extract_options(std::string_view response, const std::vector<std::string>& options);

enum class Metric { accuracy, micro_f1 };
std::string_view to_string(Metric m);
std::optional<Metric> parse_metric(std::string_view s);

struct ItemVerdict {
  std::string id;
  bool correct = false;
  std::string extracted;
  // Option counts; only meaningful for choice items.
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::string diagnostic;
};

struct BenchReport {
  std::string benchmark;
  Metric metric = Metric::accuracy;
  double value = 0.0;
  std::vector<ItemVerdict> verdicts;
};

// Value implied by the per-item verdicts under the report's metric.
double recompute_value(const BenchReport& report);

// Backend failures count as incorrect with the error text as diagnostic.
// micro_f1 requires every item to be a choice item.
BenchReport run_benchmark(std::string_view name, const std::vector<BenchItem>& items, backend::TextBackend& backend,
                          Metric metric, std::size_t workers = 1);

// Answers every item prompt with its gold answer in boxed form.
backend::FunctionBackend oracle_backend(const std::vector<BenchItem>& items);

nlohmann::json to_json(const BenchItem& item);
BenchItem item_from_json(const nlohmann::json& j);
std::vector<BenchItem> parse_bench_jsonl(std::string_view contents);
std::vector<BenchItem> read_bench(const std::string& path);

// Summary line, then one line per item.
std::string report_jsonl(const BenchReport& report);

// Published reference scores for juxtaposition. They come from 32B models and
// are not reproducible at this scale.
struct ReferenceTable {
  std::vector<std::string> benchmarks;
  std::vector<std::pair<std::string, std::vector<double>>> rows;
};
ReferenceTable load_reference(const std::string& path);

// Plain-text table with one row per report; reference rows follow when given.
std::string render_table(const std::vector<BenchReport>& reports, const ReferenceTable* reference = nullptr);

}  // namespace wingpt::evalbench
