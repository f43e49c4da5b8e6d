#include "wingpt/evalbench.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>

#include "wingpt/verify.hpp"

namespace wingpt::evalbench {

namespace {

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

Counts count_options(const OptionSet& pred, const OptionSet& gold) {
  Counts c;
  for (const auto& p : pred) (gold.count(p) ? c.tp : c.fp)++;
  for (const auto& g : gold) {
    if (!pred.count(g)) ++c.fn;
  }
  return c;
}

double f1_from(std::size_t tp, std::size_t fp, std::size_t fn) {
  const double p = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double r = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

bool is_separator(char c) { return c == ',' || c == ';' || c == '/' || c == ' ' || c == '\t' || c == '\n'; }

std::string join(const OptionSet& s) {
  std::string out;
  for (const auto& x : s) {
    if (!out.empty()) out.push_back(',');
    out += x;
  }
  return out;
}

std::string gold_text(const AnswerSpec& spec) {
  return std::visit(
      [](const auto& a) -> std::string {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, ExactAnswer>) {
          return a.gold;
        } else if constexpr (std::is_same_v<T, BoundsAnswer>) {
          return text::format_double((a.lower + a.upper) / 2.0);
        } else {
          return join(a.gold);
        }
      },
      spec);
}

ItemVerdict score_item(const BenchItem& item, const std::string& response) {
  ItemVerdict v;
  v.id = item.id;
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, ChoicesAnswer>) {
          const OptionSet pred = extract_options(response, a.options);
          const Counts c = count_options(pred, a.gold);
          v.tp = c.tp;
          v.fp = c.fp;
          v.fn = c.fn;
          v.extracted = join(pred);
          v.correct = pred == a.gold;
          if (pred.empty()) v.diagnostic = "no option found";
        } else {
          std::string boxed;
          try {
            boxed = verify::extract_boxed(response);
          } catch (const verify::ExtractionError& e) {
            v.diagnostic = e.what();
            return;
          }
          v.extracted = boxed;
          if constexpr (std::is_same_v<T, ExactAnswer>) {
            v.correct = verify::verify_exact(boxed, a.gold).correct;
          } else {
            auto value = text::parse_double(text::trim(boxed));
            if (!value) {
              v.diagnostic = "not a number";
              return;
            }
            v.correct = verify::verify_bounds(*value, a.lower, a.upper).correct;
          }
        }
      },
      item.answer);
  return v;
}

}  // namespace

void BenchItem::validate() const {
  if (id.empty()) throw InvalidItem("bench item without id");
  if (const auto* b = std::get_if<BoundsAnswer>(&answer); b && !(b->lower <= b->upper)) {
    throw InvalidItem(id + ": lower bound exceeds upper bound");
  }
  if (const auto* c = std::get_if<ChoicesAnswer>(&answer)) {
    if (c->options.empty()) throw InvalidItem(id + ": no options");
    for (const auto& g : c->gold) {
      if (std::find(c->options.begin(), c->options.end(), g) == c->options.end()) {
        throw InvalidItem(id + ": gold option " + g + " is not among the options");
      }
    }
  }
}

double micro_f1(const std::vector<OptionSet>& predictions, const std::vector<OptionSet>& golds) {
  if (predictions.size() != golds.size()) throw LengthMismatch("micro_f1: predictions and golds differ in length");
  if (golds.empty()) throw EmptyBenchmark("micro_f1: no items");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const Counts c = count_options(predictions[i], golds[i]);
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
  }
  return f1_from(tp, fp, fn);
}

double accuracy_exact(const std::vector<std::string>& extracted, const std::vector<std::string>& golds) {
  if (extracted.size() != golds.size()) throw LengthMismatch("accuracy_exact: lists differ in length");
  if (golds.empty()) throw EmptyBenchmark("accuracy_exact: no items");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) hits += verify::verify_exact(extracted[i], golds[i]).correct;
  return static_cast<double>(hits) / static_cast<double>(golds.size());
}

double accuracy_bounds(const std::vector<std::optional<double>>& values, const std::vector<BoundsAnswer>& bounds) {
  if (values.size() != bounds.size()) throw LengthMismatch("accuracy_bounds: lists differ in length");
  if (bounds.empty()) throw EmptyBenchmark("accuracy_bounds: no items");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    if (values[i]) hits += verify::verify_bounds(*values[i], bounds[i].lower, bounds[i].upper).correct;
  }
  return static_cast<double>(hits) / static_cast<double>(bounds.size());
}

OptionSet extract_options(std::string_view response, const std::vector<std::string>& options) {
  const std::set<std::string> known(options.begin(), options.end());
  if (response.find("\\boxed{") != std::string_view::npos) {
    std::string boxed;
    try {
      boxed = verify::extract_boxed(response);
    } catch (const verify::ExtractionError&) {
      return {};
    }
    OptionSet out;
    std::size_t pos = 0;
    while (pos <= boxed.size()) {
      std::size_t end = pos;
      while (end < boxed.size() && !is_separator(boxed[end])) ++end;
      std::string tok(text::trim(std::string_view(boxed).substr(pos, end - pos)));
      if (!tok.empty() && tok.front() == '(' && tok.back() == ')' && tok.size() > 2) tok = tok.substr(1, tok.size() - 2);
      if (known.count(tok)) out.insert(tok);
      pos = end + 1;
    }
    return out;
  }
  // Last standalone capital letter: not adjacent to another letter or digit.
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  for (std::size_t i = response.size(); i-- > 0;) {
    const char c = response[i];
    if (c < 'A' || c > 'Z') continue;
    if (i > 0 && is_word(response[i - 1])) continue;
    if (i + 1 < response.size() && is_word(response[i + 1])) continue;
    std::string tok(1, c);
    if (known.count(tok)) return {tok};
  }
  return {};
}

std::string_view to_string(Metric m) { return m == Metric::accuracy ? "accuracy" : "micro_f1"; }

std::optional<Metric> parse_metric(std::string_view s) {
  if (s == "accuracy") return Metric::accuracy;
  if (s == "micro_f1") return Metric::micro_f1;
  return std::nullopt;
}

double recompute_value(const BenchReport& report) {
  if (report.verdicts.empty()) throw EmptyBenchmark("report has no verdicts");
  if (report.metric == Metric::micro_f1) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& v : report.verdicts) {
      tp += v.tp;
      fp += v.fp;
      fn += v.fn;
    }
    return f1_from(tp, fp, fn);
  }
  std::size_t hits = 0;
  for (const auto& v : report.verdicts) hits += v.correct;
  return static_cast<double>(hits) / static_cast<double>(report.verdicts.size());
}

BenchReport run_benchmark(std::string_view name, const std::vector<BenchItem>& items, backend::TextBackend& backend,
                          Metric metric, std::size_t workers) {
  if (items.empty()) throw EmptyBenchmark(std::string(name) + ": no items");
  for (const auto& item : items) {
    item.validate();
    if (metric == Metric::micro_f1 && !std::holds_alternative<ChoicesAnswer>(item.answer)) {
      throw InvalidItem(item.id + ": micro_f1 needs choice items");
    }
  }
  BenchReport report;
  report.benchmark = std::string(name);
  report.metric = metric;
  report.verdicts.resize(items.size());
  backend::parallel_for(items.size(), workers, [&](std::size_t i) {
    std::string response;
    try {
      response = backend.complete(items[i].prompt);
    } catch (const std::exception& e) {
      ItemVerdict v;
      v.id = items[i].id;
      v.diagnostic = std::string("backend failure: ") + e.what();
      if (const auto* c = std::get_if<ChoicesAnswer>(&items[i].answer)) v.fn = c->gold.size();
      report.verdicts[i] = std::move(v);
      return;
    }
    report.verdicts[i] = score_item(items[i], response);
  });
  report.value = recompute_value(report);
  return report;
}

backend::FunctionBackend oracle_backend(const std::vector<BenchItem>& items) {
  auto answers = std::make_shared<std::map<std::string, std::string>>();
  for (const auto& item : items) (*answers)[item.prompt] = "\\boxed{" + gold_text(item.answer) + "}";
  return backend::FunctionBackend([answers](const std::string& prompt) {
    auto it = answers->find(prompt);
    if (it == answers->end()) throw backend::BackendUnavailable("oracle backend: unknown prompt");
    return it->second;
  });
}

nlohmann::json to_json(const BenchItem& item) {
  nlohmann::json answer = std::visit(
      [](const auto& a) -> nlohmann::json {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, ExactAnswer>) {
          return {{"type", "exact"}, {"gold", a.gold}};
        } else if constexpr (std::is_same_v<T, BoundsAnswer>) {
          return {{"type", "bounds"}, {"lower", a.lower}, {"upper", a.upper}};
        } else {
          return {{"type", "choices"}, {"gold", a.gold}, {"options", a.options}};
        }
      },
      item.answer);
  return {{"id", item.id}, {"prompt", item.prompt}, {"answer", answer}};
}

BenchItem item_from_json(const nlohmann::json& j) {
  BenchItem item;
  try {
    item.id = j.at("id").get<std::string>();
    item.prompt = j.at("prompt").get<std::string>();
    const auto& a = j.at("answer");
    const std::string type = a.at("type").get<std::string>();
    if (type == "exact") {
      item.answer = ExactAnswer{a.at("gold").get<std::string>()};
    } else if (type == "bounds") {
      item.answer = BoundsAnswer{a.at("lower").get<double>(), a.at("upper").get<double>()};
    } else if (type == "choices") {
      auto gold = a.at("gold").get<std::vector<std::string>>();
      item.answer = ChoicesAnswer{OptionSet(gold.begin(), gold.end()), a.at("options").get<std::vector<std::string>>()};
    } else {
      throw InvalidItem("unknown answer type " + type);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidItem(std::string("bench item: ") + e.what());
  }
  item.validate();
  return item;
}

std::vector<BenchItem> parse_bench_jsonl(std::string_view contents) {
  std::vector<BenchItem> items;
  std::size_t pos = 0, line_no = 0;
  while (pos < contents.size()) {
    std::size_t end = contents.find('\n', pos);
    if (end == std::string_view::npos) end = contents.size();
    ++line_no;
    std::string_view line = text::trim(contents.substr(pos, end - pos));
    pos = end + 1;
    if (line.empty()) continue;
    try {
      items.push_back(item_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw InvalidItem("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return items;
}

std::vector<BenchItem> read_bench(const std::string& path) { return parse_bench_jsonl(read_file(path)); }

std::string report_jsonl(const BenchReport& report) {
  nlohmann::json head{{"benchmark", report.benchmark},
                      {"metric", to_string(report.metric)},
                      {"value", report.value},
                      {"items", report.verdicts.size()}};
  std::string out = head.dump() + "\n";
  for (const auto& v : report.verdicts) {
    nlohmann::json j{{"id", v.id}, {"correct", v.correct}, {"extracted", v.extracted}};
    if (report.metric == Metric::micro_f1) {
      j["tp"] = v.tp;
      j["fp"] = v.fp;
      j["fn"] = v.fn;
    }
    if (!v.diagnostic.empty()) j["diagnostic"] = v.diagnostic;
    out += j.dump() + "\n";
  }
  return out;
}

ReferenceTable load_reference(const std::string& path) {
  const auto j = nlohmann::json::parse(read_file(path));
  ReferenceTable t;
  t.benchmarks = j.at("benchmarks").get<std::vector<std::string>>();
  for (const auto& row : j.at("rows")) {
    auto scores = row.at("scores").get<std::vector<double>>();
    if (scores.size() != t.benchmarks.size()) throw Error("reference row has wrong column count");
    t.rows.emplace_back(row.at("model").get<std::string>(), std::move(scores));
  }
  return t;
}

std::string render_table(const std::vector<BenchReport>& reports, const ReferenceTable* reference) {
  std::vector<std::vector<std::string>> rows{{"benchmark", "metric", "items", "score"}};
  for (const auto& r : reports) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * r.value);
    rows.push_back({r.benchmark, std::string(to_string(r.metric)), std::to_string(r.verdicts.size()), buf});
  }
  auto render = [](const std::vector<std::vector<std::string>>& cells) {
    std::vector<std::size_t> width;
    for (const auto& row : cells) {
      width.resize(std::max(width.size(), row.size()), 0);
      for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    std::string out;
    for (const auto& row : cells) {
      std::string line;
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c > 0) line += "  ";
        line += row[c];
        if (c + 1 < row.size()) line.append(width[c] - row[c].size(), ' ');
      }
      out += line + "\n";
    }
    return out;
  };
  std::string out = render(rows);
  if (reference) {
    out += "\nreference scores (32B models, not reproducible at desk scale)\n";
    std::vector<std::vector<std::string>> ref{{"model"}};
    for (const auto& b : reference->benchmarks) ref[0].push_back(b);
    for (const auto& [model, scores] : reference->rows) {
      std::vector<std::string> row{model};
      for (double s : scores) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f", s);
        row.emplace_back(buf);
      }
      ref.push_back(std::move(row));
    }
    out += render(ref);
  }
  return out;
}

}  // namespace wingpt::evalbench
