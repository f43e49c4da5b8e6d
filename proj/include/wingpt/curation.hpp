#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wingpt/backend.hpp"
#include "wingpt/records.hpp"
#include "wingpt/verify.hpp"

// Dataset curation: format and repetition filtering, correctness- and
// score-based selection, difficulty labelling, SFT sampling, RL candidate
// selection and think-tracing.
namespace wingpt::curation {

using records::CotRecord;
using records::QaRecord;

enum class FormatError { MissingTags, DuplicateTags, TagOrder, LeadingText, EmptyThink, EmptyAnswer };
std::string_view to_string(FormatError e);

struct FormatVerdict {
  bool valid = false;
  std::string think;
  std::string answer;
  std::optional<FormatError> reason;
};

// Valid iff the text is "<think>" + think + "</think>" + answer with exactly
// one of each tag, a non-blank think segment and a non-blank answer.
FormatVerdict check_think_format(std::string_view response_raw);

struct NgramFilterConfig {
  std::size_t n = 4;
  double max_repeat_ratio = 0.3;

  void validate() const;
};

// Fraction of word n-gram occurrences that repeat an earlier gram. 0 for texts
// shorter than n tokens.
double repetition_ratio(std::string_view text, std::size_t n);

struct Rejection {
  std::size_t index = 0;  // position in the input
  CotRecord record;
  std::string reason;
};

struct FilterResult {
  std::vector<CotRecord> kept;
  std::vector<Rejection> rejected;
};

FilterResult filter_dataset(const std::vector<CotRecord>& records, const NgramFilterConfig& cfg);

class MissingGold : public Error {
 public:
  explicit MissingGold(std::string record_id);
  const std::string& record_id() const { return record_id_; }

 private:
  std::string record_id_;
};

using AnswerVerifier = std::function<verify::RuleVerdict(std::string_view answer, const QaRecord& qa)>;

// \boxed{} extraction followed by verify_exact against the gold answer.
verify::RuleVerdict boxed_exact_verifier(std::string_view answer, const QaRecord& qa);

struct SelectionResult {
  std::vector<CotRecord> kept;
  std::vector<Rejection> dropped;
};

SelectionResult select_verifiable(const std::vector<CotRecord>& records,
                                  const std::map<std::string, QaRecord>& questions,
                                  const AnswerVerifier& verifier = boxed_exact_verifier);

using CandidateScorer = std::function<double(const CotRecord&)>;

// Per question (record_id), keeps the ceil(fraction * n) best-scored
// candidates. Ties go to the earlier candidate. Output keeps input order.
std::vector<CotRecord> select_unverifiable(const std::vector<CotRecord>& records,
                                           const CandidateScorer& scorer, double keep_top_fraction);

class JudgeUnavailable : public Error {
 public:
  using Error::Error;
};

class UnparseableJudgeOutput : public Error {
 public:
  explicit UnparseableJudgeOutput(const std::string& raw);
};

std::string_view difficulty_rubric();
std::string render_difficulty_prompt(const QaRecord& qa, const CotRecord& cot);
records::DifficultyLabel parse_difficulty(std::string_view raw);
records::DifficultyLabel classify_difficulty(const QaRecord& qa, const CotRecord& cot,
                                             backend::TextBackend& judge);
// Offline fallback: counts reasoning markers in the think segment.
records::DifficultyLabel classify_difficulty_heuristic(const QaRecord& qa, const CotRecord& cot);

struct SamplingPlan {
  std::map<records::Category, double> target_shares;
  std::map<records::DifficultyLevel, double> difficulty_weights;
  std::uint64_t seed = 0;

  void validate() const;
  // 50/18/14/18 general/math/programming/medical; weights 1/2/4 by level.
  static SamplingPlan standard(std::uint64_t seed);
};

class InsufficientCategory : public Error {
 public:
  InsufficientCategory(records::Category category, std::size_t needed, std::size_t available);
  records::Category category() const { return category_; }
  std::size_t needed() const { return needed_; }
  std::size_t available() const { return available_; }

 private:
  records::Category category_;
  std::size_t needed_;
  std::size_t available_;
};

// Largest-remainder apportionment of `total` over the plan's shares.
std::map<records::Category, std::size_t> category_quotas(const SamplingPlan& plan, std::size_t total);

// Draws `total` records. Within a category, weighted sampling without
// replacement by difficulty weight. Output is in pool order.
std::vector<records::LabeledQa> sample_sft(const std::vector<records::LabeledQa>& pool,
                                           const SamplingPlan& plan, std::size_t total);

// Drops all-correct and all-wrong questions, then sorts by ascending n_correct
// (ties by record id) and returns the first k ids.
std::vector<std::string> select_rl_candidates(const std::vector<records::PassStats>& stats, std::size_t k);

class GeneratorUnavailable : public Error {
 public:
  using Error::Error;
};

class FormatInvalid : public Error {
 public:
  using Error::Error;
};

std::string render_trace_prompt(std::string_view question, std::string_view answer);

// Asks the generator for a reasoning chain ending in `answer`. The returned
// record always carries the given answer; only the think segment comes from
// the generator.
CotRecord trace_think(std::string_view record_id, std::string_view question, std::string_view answer,
                      backend::TextBackend& generator, int max_attempts = 3);

}  // namespace wingpt::curation
