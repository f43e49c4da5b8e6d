#include "wingpt/curation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace wingpt::curation {

using records::Category;
using records::DifficultyLabel;
using records::DifficultyLevel;
using records::LabeledQa;

namespace {

constexpr std::string_view kOpen = "<think>";
constexpr std::string_view kClose = "</think>";

constexpr std::string_view kRubric =
    "Basic (low knowledge density or complexity, requiring only basic common sense or simple "
    "concepts, direct reasoning process, clear steps); Intermediate (moderate knowledge density or "
    "complexity, requiring certain professional knowledge, theories, or formula support, involving "
    "multi-step logical deduction); Advanced (high knowledge density or complexity, requiring deep "
    "professional knowledge and background theory, involving interdisciplinary integration, complex "
    "analysis, or innovative thinking).";

}  // namespace

std::string_view to_string(FormatError e) {
  switch (e) {
    case FormatError::MissingTags: return "MissingTags";
    case FormatError::DuplicateTags: return "DuplicateTags";
    case FormatError::TagOrder: return "TagOrder";
    case FormatError::LeadingText: return "LeadingText";
    case FormatError::EmptyThink: return "EmptyThink";
    case FormatError::EmptyAnswer: return "EmptyAnswer";
  }
  return "?";
}

FormatVerdict check_think_format(std::string_view raw) {
  FormatVerdict v;
  auto fail = [&v](FormatError e) {
    v.reason = e;
    return v;
  };
  const std::size_t opens = text::count_occurrences(raw, kOpen);
  const std::size_t closes = text::count_occurrences(raw, kClose);
  if (opens == 0 || closes == 0) return fail(FormatError::MissingTags);
  if (opens > 1 || closes > 1) return fail(FormatError::DuplicateTags);
  const std::size_t open = raw.find(kOpen);
  const std::size_t close = raw.find(kClose);
  if (close < open) return fail(FormatError::TagOrder);
  if (open != 0) return fail(FormatError::LeadingText);
  std::string_view think = raw.substr(kOpen.size(), close - kOpen.size());
  std::string_view answer = raw.substr(close + kClose.size());
  if (text::trim(think).empty()) return fail(FormatError::EmptyThink);
  if (text::trim(answer).empty()) return fail(FormatError::EmptyAnswer);
  v.valid = true;
  v.think = std::string(think);
  v.answer = std::string(answer);
  return v;
}

void NgramFilterConfig::validate() const {
  if (n < 2) throw Error("NgramFilterConfig: n must be >= 2");
  if (!(max_repeat_ratio >= 0.0 && max_repeat_ratio <= 1.0)) {
    throw Error("NgramFilterConfig: max_repeat_ratio must lie in [0, 1]");
  }
}

double repetition_ratio(std::string_view text, std::size_t n) {
  if (n < 2) throw Error("repetition_ratio: n must be >= 2");
  const auto tokens = text::split_whitespace(text);
  if (tokens.size() < n) return 0.0;
  const std::size_t total = tokens.size() - n + 1;
  std::set<std::vector<std::string>> distinct;
  for (std::size_t i = 0; i < total; ++i) {
    distinct.emplace(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                     tokens.begin() + static_cast<std::ptrdiff_t>(i + n));
  }
  return static_cast<double>(total - distinct.size()) / static_cast<double>(total);
}

FilterResult filter_dataset(const std::vector<CotRecord>& records, const NgramFilterConfig& cfg) {
  cfg.validate();
  FilterResult out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const CotRecord& r = records[i];
    const FormatVerdict fmt = check_think_format(r.response_raw);
    if (!fmt.valid) {
      out.rejected.push_back({i, r, "format:" + std::string(to_string(*fmt.reason))});
      continue;
    }
    const double ratio = repetition_ratio(r.response_raw, cfg.n);
    if (ratio > cfg.max_repeat_ratio) {
      out.rejected.push_back({i, r, "repetition:" + text::format_double(ratio)});
      continue;
    }
    out.kept.push_back(r);
  }
  return out;
}

MissingGold::MissingGold(std::string record_id)
    : Error("MissingGold: no gold answer for record '" + record_id + "'"), record_id_(std::move(record_id)) {}

verify::RuleVerdict boxed_exact_verifier(std::string_view answer, const QaRecord& qa) {
  try {
    return verify::verify_exact(verify::extract_boxed(answer), *qa.gold_answer);
  } catch (const verify::ExtractionError& e) {
    verify::RuleVerdict v;
    v.detail = e.kind() == verify::ExtractError::NoBoxedAnswer ? "NoBoxedAnswer" : "UnbalancedBraces";
    return v;
  }
}

SelectionResult select_verifiable(const std::vector<CotRecord>& records,
                                  const std::map<std::string, QaRecord>& questions,
                                  const AnswerVerifier& verifier) {
  SelectionResult out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const CotRecord& r = records[i];
    auto it = questions.find(r.record_id);
    if (it == questions.end() || !it->second.gold_answer) throw MissingGold(r.record_id);
    const std::string_view answer = r.answer.empty() ? std::string_view(r.response_raw) : r.answer;
    verify::RuleVerdict v = verifier(answer, it->second);
    if (v.correct) {
      out.kept.push_back(r);
    } else {
      out.dropped.push_back({i, r, v.detail});
    }
  }
  return out;
}

std::vector<CotRecord> select_unverifiable(const std::vector<CotRecord>& records,
                                           const CandidateScorer& scorer, double keep_top_fraction) {
  if (!(keep_top_fraction > 0.0 && keep_top_fraction <= 1.0)) {
    throw Error("select_unverifiable: keep_top_fraction must lie in (0, 1]");
  }
  std::map<std::string, std::vector<std::size_t>> groups;
  std::vector<double> scores(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    groups[records[i].record_id].push_back(i);
    scores[i] = scorer(records[i]);
  }
  std::vector<bool> keep(records.size(), false);
  for (auto& [id, members] : groups) {
    std::stable_sort(members.begin(), members.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    const double want = std::ceil(keep_top_fraction * static_cast<double>(members.size()) - 1e-9);
    const std::size_t n = std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, members.size());
    for (std::size_t j = 0; j < n; ++j) keep[members[j]] = true;
  }
  std::vector<CotRecord> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (keep[i]) out.push_back(records[i]);
  }
  return out;
}

UnparseableJudgeOutput::UnparseableJudgeOutput(const std::string& raw)
    : Error("UnparseableJudgeOutput: expected basic, intermediate or advanced, got: " + raw) {}

std::string_view difficulty_rubric() { return kRubric; }

std::string render_difficulty_prompt(const QaRecord& qa, const CotRecord& cot) {
  std::string p;
  p += "Classify the difficulty of the question below into exactly one of three classes:\n\n";
  p += kRubric;
  p += "\n\n### Question\n";
  p += qa.question;
  p += "\n\n### Reference Reasoning\n";
  p += cot.think;
  p += "\n\n### Reference Answer\n";
  p += cot.answer;
  p += "\n\nGive a one-paragraph justification, then the class name as "
       "\\boxed{basic}, \\boxed{intermediate} or \\boxed{advanced}.";
  return p;
}

DifficultyLabel parse_difficulty(std::string_view raw) {
  std::string label;
  std::string rationale;
  try {
    label = text::normalize(verify::extract_boxed(raw));
    rationale = std::string(text::trim(raw.substr(0, raw.rfind("\\boxed{"))));
  } catch (const verify::ExtractionError&) {
    label = text::normalize(raw);
  }
  auto level = records::parse_level(label);
  if (!level) throw UnparseableJudgeOutput(std::string(raw));
  return DifficultyLabel{*level, rationale};
}

DifficultyLabel classify_difficulty(const QaRecord& qa, const CotRecord& cot, backend::TextBackend& judge) {
  std::string raw;
  try {
    raw = judge.complete(render_difficulty_prompt(qa, cot));
  } catch (const backend::BackendUnavailable& e) {
    throw JudgeUnavailable(e.what());
  }
  return parse_difficulty(raw);
}

DifficultyLabel classify_difficulty_heuristic(const QaRecord& qa, const CotRecord& cot) {
  static const std::vector<std::string> kMarkers = {
      "because", "therefore", "thus", "hence", "formula", "calculate", "derive", "assume",
      "diagnosis", "differential", "mechanism", "since", "=", "step"};
  const std::string think = text::casefold(cot.think);
  std::size_t hits = 0;
  for (const auto& m : kMarkers) hits += text::count_occurrences(think, m);
  const std::size_t length = text::split_whitespace(qa.question).size() + text::split_whitespace(cot.think).size();
  const std::size_t score = hits + length / 50;
  DifficultyLabel label;
  label.level = score <= 2 ? DifficultyLevel::basic
                           : (score <= 6 ? DifficultyLevel::intermediate : DifficultyLevel::advanced);
  label.rationale = "heuristic: " + std::to_string(hits) + " reasoning markers, " +
                    std::to_string(length) + " tokens";
  return label;
}

void SamplingPlan::validate() const {
  if (target_shares.empty()) throw Error("SamplingPlan: no target shares");
  double sum = 0.0;
  for (const auto& [c, share] : target_shares) {
    if (!(share >= 0.0)) throw Error("SamplingPlan: negative share");
    sum += share;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error("SamplingPlan: shares must sum to 1");
  double prev = 0.0;
  for (DifficultyLevel level : records::kAllLevels) {
    auto it = difficulty_weights.find(level);
    if (it == difficulty_weights.end() || !(it->second > 0.0)) {
      throw Error("SamplingPlan: every difficulty level needs a positive weight");
    }
    if (it->second < prev) throw Error("SamplingPlan: weights must not decrease from basic to advanced");
    prev = it->second;
  }
}

SamplingPlan SamplingPlan::standard(std::uint64_t seed) {
  SamplingPlan p;
  p.target_shares = {{Category::general, 0.50},
                     {Category::math, 0.18},
                     {Category::programming, 0.14},
                     {Category::medical, 0.18}};
  p.difficulty_weights = {{DifficultyLevel::basic, 1.0},
                          {DifficultyLevel::intermediate, 2.0},
                          {DifficultyLevel::advanced, 4.0}};
  p.seed = seed;
  return p;
}

InsufficientCategory::InsufficientCategory(Category category, std::size_t needed, std::size_t available)
    : Error("InsufficientCategory: " + std::string(records::to_string(category)) + " needs " +
            std::to_string(needed) + ", pool has " + std::to_string(available)),
      category_(category),
      needed_(needed),
      available_(available) {}

std::map<Category, std::size_t> category_quotas(const SamplingPlan& plan, std::size_t total) {
  plan.validate();
  std::map<Category, std::size_t> quota;
  std::vector<std::pair<double, Category>> remainders;
  std::size_t assigned = 0;
  for (const auto& [c, share] : plan.target_shares) {
    const double exact = share * static_cast<double>(total);
    const auto base = static_cast<std::size_t>(std::floor(exact));
    quota[c] = base;
    assigned += base;
    remainders.emplace_back(exact - static_cast<double>(base), c);
  }
  // Largest remainder first; category order breaks ties.
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++quota[remainders[i % remainders.size()].second];
  return quota;
}

std::vector<LabeledQa> sample_sft(const std::vector<LabeledQa>& pool, const SamplingPlan& plan,
                                  std::size_t total) {
  const auto quotas = category_quotas(plan, total);
  std::map<Category, std::vector<std::size_t>> by_category;
  for (std::size_t i = 0; i < pool.size(); ++i) by_category[pool[i].record.category].push_back(i);

  std::vector<std::size_t> chosen;
  for (const auto& [category, need] : quotas) {
    if (need == 0) continue;
    const auto& members = by_category[category];
    if (members.size() < need) throw InsufficientCategory(category, need, members.size());
    // Efraimidis-Spirakis: key = log(u) / w, keep the largest keys.
    Rng rng = Rng::derive(plan.seed, {static_cast<std::uint64_t>(category)});
    std::vector<std::pair<double, std::size_t>> keyed;
    keyed.reserve(members.size());
    for (std::size_t idx : members) {
      double u = rng.uniform();
      while (u <= 0.0) u = rng.uniform();
      const double w = plan.difficulty_weights.at(pool[idx].label.level);
      keyed.emplace_back(std::log(u) / w, idx);
    }
    std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(need), keyed.end(),
                      [](const auto& a, const auto& b) {
                        return a.first != b.first ? a.first > b.first : a.second < b.second;
                      });
    for (std::size_t j = 0; j < need; ++j) chosen.push_back(keyed[j].second);
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<LabeledQa> out;
  out.reserve(chosen.size());
  for (std::size_t idx : chosen) out.push_back(pool[idx]);
  return out;
}

std::vector<std::string> select_rl_candidates(const std::vector<records::PassStats>& stats, std::size_t k) {
  std::vector<const records::PassStats*> survivors;
  for (const auto& s : stats) {
    if (auto v = records::validate(s)) throw records::SchemaViolation(0, *v, "invalid PassStats");
    if (s.n_correct == 0 || s.n_correct == s.n_rollouts) continue;
    survivors.push_back(&s);
  }
  std::sort(survivors.begin(), survivors.end(), [](const auto* a, const auto* b) {
    return a->n_correct != b->n_correct ? a->n_correct < b->n_correct : a->record_id < b->record_id;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < survivors.size() && i < k; ++i) out.push_back(survivors[i]->record_id);
  return out;
}

std::string render_trace_prompt(std::string_view question, std::string_view answer) {
  std::string p;
  p += "Reconstruct the step-by-step reasoning that leads from the question to the given answer.\n";
  p += "Reply as <think>your reasoning</think> followed by the answer exactly as given.\n\n";
  p += "### Question\n";
  p += question;
  p += "\n\n### Answer\n";
  p += answer;
  return p;
}

CotRecord trace_think(std::string_view record_id, std::string_view question, std::string_view answer,
                      backend::TextBackend& generator, int max_attempts) {
  const std::string prompt = render_trace_prompt(question, answer);
  std::string last_reason;
  for (int attempt = 1; attempt <= std::max(1, max_attempts); ++attempt) {
    std::string raw;
    try {
      raw = generator.complete(prompt);
    } catch (const backend::BackendUnavailable& e) {
      throw GeneratorUnavailable(e.what());
    }
    const FormatVerdict v = check_think_format(raw);
    if (v.valid) {
      CotRecord rec = CotRecord::from_parts(std::string(record_id), v.think, std::string(answer),
                                            records::CotSource::think_traced);
      if (check_think_format(rec.response_raw).valid) return rec;
      last_reason = "EmptyAnswer";
    } else {
      last_reason = std::string(to_string(*v.reason));
    }
  }
  throw FormatInvalid("FormatInvalid: generator output rejected after " + std::to_string(max_attempts) +
                      " attempts (" + last_reason + ")");
}

}  // namespace wingpt::curation
