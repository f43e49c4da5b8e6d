#include "wingpt/config.hpp"

#include <cctype>
#include <charconv>
#include <functional>
#include <limits>

namespace wingpt::config {

namespace {

using records::Category;
using records::DifficultyLevel;

std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

bool is_bare_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

std::string unescape(std::string_view body, const std::string& key) {
  std::string out;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '\\') {
      out.push_back(body[i]);
      continue;
    }
    if (++i == body.size()) throw ConfigError(key, "dangling escape in string");
    switch (body[i]) {
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case '"': out.push_back('"'); break;
      case '\\': out.push_back('\\'); break;
      default: throw ConfigError(key, std::string("unsupported escape \\") + body[i]);
    }
  }
  return out;
}

Value parse_value(std::string_view raw, const std::string& key, bool bare_strings) {
  raw = text::trim(raw);
  if (raw.empty()) throw ConfigError(key, "missing value");
  if (raw.front() == '"') {
    if (raw.size() < 2 || raw.back() != '"') throw ConfigError(key, "unterminated string");
    return {Value::Type::string, unescape(raw.substr(1, raw.size() - 2), key)};
  }
  if (raw == "true" || raw == "false") return {Value::Type::boolean, std::string(raw)};
  if (text::parse_double(raw)) return {Value::Type::number, std::string(raw)};
  if (bare_strings) return {Value::Type::string, std::string(raw)};
  throw ConfigError(key, "value is not a string, number, or boolean: " + std::string(raw));
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out + "\"";
}

double as_double(const std::string& key, const Value& v) {
  if (v.type != Value::Type::number) throw ConfigError(key, "expected a number");
  return *text::parse_double(v.text);
}

std::uint64_t as_uint(const std::string& key, const Value& v) {
  if (v.type != Value::Type::number) throw ConfigError(key, "expected a non-negative integer");
  std::string_view t = v.text;
  if (!t.empty() && t.front() == '+') t.remove_prefix(1);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size()) throw ConfigError(key, "expected a non-negative integer");
  return out;
}

int as_int(const std::string& key, const Value& v) {
  const std::uint64_t u = as_uint(key, v);
  if (u > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) throw ConfigError(key, "integer out of range");
  return static_cast<int>(u);
}

bool as_bool(const std::string& key, const Value& v) {
  if (v.type != Value::Type::boolean) throw ConfigError(key, "expected true or false");
  return v.text == "true";
}

std::string as_string(const std::string& key, const Value& v) {
  if (v.type != Value::Type::string) throw ConfigError(key, "expected a string");
  return v.text;
}

using Setter = std::function<void(RunConfig&, const std::string&, const Value&)>;

template <typename F>
Setter num(F f) {
  return [f](RunConfig& c, const std::string& k, const Value& v) { f(c) = as_double(k, v); };
}
template <typename F>
Setter uint(F f) {
  return [f](RunConfig& c, const std::string& k, const Value& v) {
    f(c) = static_cast<std::remove_reference_t<decltype(f(c))>>(as_uint(k, v));
  };
}
template <typename F>
Setter integer(F f) {
  return [f](RunConfig& c, const std::string& k, const Value& v) { f(c) = as_int(k, v); };
}
template <typename F>
Setter boolean(F f) {
  return [f](RunConfig& c, const std::string& k, const Value& v) { f(c) = as_bool(k, v); };
}
template <typename F>
Setter str(F f) {
  return [f](RunConfig& c, const std::string& k, const Value& v) { f(c) = as_string(k, v); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"run.seed", uint([](RunConfig& c) -> std::uint64_t& { return c.seed; })},
      {"filter.n", uint([](RunConfig& c) -> std::size_t& { return c.filter.n; })},
      {"filter.max_repeat_ratio", num([](RunConfig& c) -> double& { return c.filter.max_repeat_ratio; })},
      {"sampling.general", num([](RunConfig& c) -> double& { return c.sampling.target_shares[Category::general]; })},
      {"sampling.math", num([](RunConfig& c) -> double& { return c.sampling.target_shares[Category::math]; })},
      {"sampling.programming",
       num([](RunConfig& c) -> double& { return c.sampling.target_shares[Category::programming]; })},
      {"sampling.medical", num([](RunConfig& c) -> double& { return c.sampling.target_shares[Category::medical]; })},
      {"sampling.weight_basic",
       num([](RunConfig& c) -> double& { return c.sampling.difficulty_weights[DifficultyLevel::basic]; })},
      {"sampling.weight_intermediate",
       num([](RunConfig& c) -> double& { return c.sampling.difficulty_weights[DifficultyLevel::intermediate]; })},
      {"sampling.weight_advanced",
       num([](RunConfig& c) -> double& { return c.sampling.difficulty_weights[DifficultyLevel::advanced]; })},
      {"curate.unverifiable_fraction", num([](RunConfig& c) -> double& { return c.curate.unverifiable_fraction; })},
      {"curate.rl_k", uint([](RunConfig& c) -> std::size_t& { return c.curate.rl_k; })},
      {"curate.sample_total", uint([](RunConfig& c) -> std::size_t& { return c.curate.sample_total; })},
      {"curate.trace_attempts", integer([](RunConfig& c) -> int& { return c.curate.trace_attempts; })},
      {"length.free_limit", uint([](RunConfig& c) -> std::size_t& { return c.length.free_limit; })},
      {"length.max_length", uint([](RunConfig& c) -> std::size_t& { return c.length.max_length; })},
      {"length.cap", num([](RunConfig& c) -> double& { return c.length.cap; })},
      {"rm.scale_alpha", num([](RunConfig& c) -> double& { return c.rm.scale_alpha; })},
      {"rm.use_magnitude", boolean([](RunConfig& c) -> bool& { return c.rm.use_magnitude; })},
      {"rm.learning_rate", num([](RunConfig& c) -> double& { return c.rm.learning_rate; })},
      {"rm.epochs", integer([](RunConfig& c) -> int& { return c.rm.epochs; })},
      {"policy.order", integer([](RunConfig& c) -> int& { return c.policy_order; })},
      {"sft.peak_lr", num([](RunConfig& c) -> double& { return c.sft.peak_lr; })},
      {"sft.warmup_steps", integer([](RunConfig& c) -> int& { return c.sft.warmup_steps; })},
      {"sft.total_steps", integer([](RunConfig& c) -> int& { return c.sft.total_steps; })},
      {"sft.floor_fraction", num([](RunConfig& c) -> double& { return c.sft.floor_fraction; })},
      {"sft.epochs", integer([](RunConfig& c) -> int& { return c.sft.epochs; })},
      {"sft.batch_size", integer([](RunConfig& c) -> int& { return c.sft.batch_size; })},
      {"sft.context_limit", uint([](RunConfig& c) -> std::size_t& { return c.sft.context_limit; })},
      {"sft.weight_decay", num([](RunConfig& c) -> double& { return c.sft.adam.weight_decay; })},
      {"grpo.group_size", uint([](RunConfig& c) -> std::size_t& { return c.grpo.group_size; })},
      {"grpo.batch_prompts", uint([](RunConfig& c) -> std::size_t& { return c.grpo.batch_prompts; })},
      {"grpo.clip_epsilon", num([](RunConfig& c) -> double& { return c.grpo.clip_epsilon; })},
      {"grpo.kl_beta", num([](RunConfig& c) -> double& { return c.grpo.kl_beta; })},
      {"grpo.learning_rate", num([](RunConfig& c) -> double& { return c.grpo.learning_rate; })},
      {"grpo.steps", integer([](RunConfig& c) -> int& { return c.grpo.steps; })},
      {"grpo.max_len", uint([](RunConfig& c) -> std::size_t& { return c.grpo.max_len; })},
      {"grpo.inner_epochs", integer([](RunConfig& c) -> int& { return c.grpo.inner_epochs; })},
      {"grpo.workers", uint([](RunConfig& c) -> std::size_t& { return c.grpo.workers; })},
      {"grpo.weight_decay", num([](RunConfig& c) -> double& { return c.grpo.adam.weight_decay; })},
      {"tasks.kind", str([](RunConfig& c) -> std::string& { return c.tasks.kind; })},
      {"tasks.count", uint([](RunConfig& c) -> std::size_t& { return c.tasks.count; })},
      {"diagchain.max_turns", integer([](RunConfig& c) -> int& { return c.diagchain.max_turns; })},
      {"diagchain.synonyms", str([](RunConfig& c) -> std::string& { return c.diagchain.synonyms; })},
      {"judge.max_attempts", integer([](RunConfig& c) -> int& { return c.judge.max_attempts; })},
      {"judge.workers", uint([](RunConfig& c) -> std::size_t& { return c.judge.workers; })},
      {"eval.workers", uint([](RunConfig& c) -> std::size_t& { return c.eval_workers; })},
  };
  return table;
}

}  // namespace

ConfigError::ConfigError(const std::string& key, const std::string& message)
    : Error(key.empty() ? message : key + ": " + message), key_(key) {}

Document parse_document(std::string_view contents) {
  Document doc;
  std::string section;
  std::size_t pos = 0, line_no = 0;
  while (pos < contents.size()) {
    std::size_t end = contents.find('\n', pos);
    if (end == std::string_view::npos) end = contents.size();
    ++line_no;
    const std::string where = "line " + std::to_string(line_no);
    std::string_view line = text::trim(strip_comment(contents.substr(pos, end - pos)));
    pos = end + 1;
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("", where + ": malformed section header");
      std::string_view name = text::trim(line.substr(1, line.size() - 2));
      if (!is_bare_key(name)) throw ConfigError("", where + ": bad section name");
      section = std::string(name);
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("", where + ": expected key = value");
    std::string_view k = text::trim(line.substr(0, eq));
    if (!is_bare_key(k)) throw ConfigError(std::string(k), where + ": bad key");
    const std::string key = (section.empty() ? "run" : section) + "." + std::string(k);
    doc[key] = parse_value(line.substr(eq + 1), key, false);
  }
  return doc;
}

void apply_override(Document& doc, std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError(std::string(assignment), "override must be section.key=value");
  std::string key(text::trim(assignment.substr(0, eq)));
  if (key.find('.') == std::string::npos) key = "run." + key;
  doc[key] = parse_value(assignment.substr(eq + 1), key, true);
}

void RunConfig::finalize() {
  sampling.seed = seed;
  rm.seed = seed;
  sft.seed = seed;
  grpo.seed = seed;
  auto check = [](const char* section, const auto& module) {
    try {
      module.validate();
    } catch (const Error& e) {
      throw ConfigError(section, e.what());
    }
  };
  check("filter", filter);
  check("sampling", sampling);
  check("length", length);
  check("rm", rm);
  check("sft", sft);
  check("grpo", grpo);
  if (policy_order < 0) throw ConfigError("policy.order", "must be >= 0");
  if (!(curate.unverifiable_fraction > 0.0 && curate.unverifiable_fraction <= 1.0)) {
    throw ConfigError("curate.unverifiable_fraction", "must lie in (0, 1]");
  }
  if (curate.trace_attempts < 1) throw ConfigError("curate.trace_attempts", "must be >= 1");
  if (tasks.count < 1) throw ConfigError("tasks.count", "must be >= 1");
  if (diagchain.max_turns < 1) throw ConfigError("diagchain.max_turns", "must be >= 1");
  if (judge.max_attempts < 1) throw ConfigError("judge.max_attempts", "must be >= 1");
  if (judge.workers < 1) throw ConfigError("judge.workers", "must be >= 1");
  if (eval_workers < 1) throw ConfigError("eval.workers", "must be >= 1");
}

RunConfig build_config(const Document& doc) {
  RunConfig cfg;
  const auto& table = setters();
  for (const auto& [key, value] : doc) {
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError(key, "unknown config key");
    it->second(cfg, key, value);
  }
  cfg.finalize();
  return cfg;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  Document doc = path.empty() ? Document{} : parse_document(read_file(path));
  for (const auto& o : overrides) apply_override(doc, o);
  return build_config(doc);
}

std::string to_toml(const RunConfig& cfg) {
  auto n = [](double x) { return text::format_double(x); };
  auto b = [](bool x) { return std::string(x ? "true" : "false"); };
  auto u = [](std::uint64_t x) { return std::to_string(x); };
  const auto& s = cfg.sampling;
  auto share = [&](Category c) { return s.target_shares.count(c) ? n(s.target_shares.at(c)) : std::string("0"); };
  auto weight = [&](DifficultyLevel l) {
    return s.difficulty_weights.count(l) ? n(s.difficulty_weights.at(l)) : std::string("0");
  };
  std::string out;
  auto section = [&](const char* name) { out += std::string(out.empty() ? "" : "\n") + "[" + name + "]\n"; };
  auto kv = [&](const char* k, const std::string& v) { out += std::string(k) + " = " + v + "\n"; };
  section("run");
  kv("seed", u(cfg.seed));
  section("filter");
  kv("n", u(cfg.filter.n));
  kv("max_repeat_ratio", n(cfg.filter.max_repeat_ratio));
  section("sampling");
  kv("general", share(Category::general));
  kv("math", share(Category::math));
  kv("programming", share(Category::programming));
  kv("medical", share(Category::medical));
  kv("weight_basic", weight(DifficultyLevel::basic));
  kv("weight_intermediate", weight(DifficultyLevel::intermediate));
  kv("weight_advanced", weight(DifficultyLevel::advanced));
  section("curate");
  kv("unverifiable_fraction", n(cfg.curate.unverifiable_fraction));
  kv("rl_k", u(cfg.curate.rl_k));
  kv("sample_total", u(cfg.curate.sample_total));
  kv("trace_attempts", u(cfg.curate.trace_attempts));
  section("length");
  kv("free_limit", u(cfg.length.free_limit));
  kv("max_length", u(cfg.length.max_length));
  kv("cap", n(cfg.length.cap));
  section("rm");
  kv("scale_alpha", n(cfg.rm.scale_alpha));
  kv("use_magnitude", b(cfg.rm.use_magnitude));
  kv("learning_rate", n(cfg.rm.learning_rate));
  kv("epochs", u(cfg.rm.epochs));
  section("policy");
  kv("order", u(cfg.policy_order));
  section("sft");
  kv("peak_lr", n(cfg.sft.peak_lr));
  kv("warmup_steps", u(cfg.sft.warmup_steps));
  kv("total_steps", u(cfg.sft.total_steps));
  kv("floor_fraction", n(cfg.sft.floor_fraction));
  kv("epochs", u(cfg.sft.epochs));
  kv("batch_size", u(cfg.sft.batch_size));
  kv("context_limit", u(cfg.sft.context_limit));
  kv("weight_decay", n(cfg.sft.adam.weight_decay));
  section("grpo");
  kv("group_size", u(cfg.grpo.group_size));
  kv("batch_prompts", u(cfg.grpo.batch_prompts));
  kv("clip_epsilon", n(cfg.grpo.clip_epsilon));
  kv("kl_beta", n(cfg.grpo.kl_beta));
  kv("learning_rate", n(cfg.grpo.learning_rate));
  kv("steps", u(cfg.grpo.steps));
  kv("max_len", u(cfg.grpo.max_len));
  kv("inner_epochs", u(cfg.grpo.inner_epochs));
  kv("workers", u(cfg.grpo.workers));
  kv("weight_decay", n(cfg.grpo.adam.weight_decay));
  section("tasks");
  kv("kind", quote(cfg.tasks.kind));
  kv("count", u(cfg.tasks.count));
  section("diagchain");
  kv("max_turns", u(cfg.diagchain.max_turns));
  kv("synonyms", quote(cfg.diagchain.synonyms));
  section("judge");
  kv("max_attempts", u(cfg.judge.max_attempts));
  kv("workers", u(cfg.judge.workers));
  section("eval");
  kv("workers", u(cfg.eval_workers));
  return out;
}

}  // namespace wingpt::config
