#include "wingpt/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace wingpt::policy {

namespace {

constexpr TokenId kSeparator = -1;
constexpr TokenId kPad = -2;

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw Error("Vocabulary: empty token");
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw Error("Vocabulary: duplicate token " + tokens_[i]);
    }
    longest_ = std::max(longest_, tokens_[i].size());
  }
  auto it = index_.find("<eos>");
  if (it == index_.end()) throw Error("Vocabulary: missing <eos>");
  eos_ = it->second;
}

Vocabulary Vocabulary::standard() {
  std::vector<std::string> t = {"<eos>", "<think>", "</think>", "\\boxed{", "}"};
  for (char d = '0'; d <= '9'; ++d) t.emplace_back(1, d);
  for (const char* s : {"+", "-", "=", "/", "."}) t.emplace_back(s);
  return Vocabulary(std::move(t));
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw UnknownToken("token id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(token);
  if (it == index_.end()) throw UnknownToken("unknown token: " + std::string(token));
  return it->second;
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_space(text[i])) {
      ++i;
      continue;
    }
    bool matched = false;
    for (std::size_t len = std::min(longest_, text.size() - i); len >= 1; --len) {
      auto it = index_.find(text.substr(i, len));
      if (it != index_.end()) {
        out.push_back(it->second);
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) throw UnknownToken("cannot tokenize at: " + std::string(text.substr(i, 16)));
  }
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id == eos_) continue;
    out += token(id);
  }
  return out;
}

ToyPolicy::ToyPolicy(Vocabulary vocab, int order)
    : vocab_(std::move(vocab)), order_(order), zeros_(vocab_.size(), 0.0) {
  if (order_ < 1) throw Error("ToyPolicy: order must be >= 1");
}

StateKey ToyPolicy::state(std::span<const TokenId> prompt, std::span<const TokenId> generated) const {
  StateKey key(prompt.begin(), prompt.end());
  key.push_back(kSeparator);
  const std::size_t m = static_cast<std::size_t>(order_);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t back = m - i;  // how far from the end
    key.push_back(generated.size() >= back ? generated[generated.size() - back] : kPad);
  }
  return key;
}

std::span<const double> ToyPolicy::row(const StateKey& key) const {
  auto it = table_.find(key);
  return it == table_.end() ? std::span<const double>(zeros_) : std::span<const double>(it->second);
}

std::vector<double>& ToyPolicy::mutable_row(const StateKey& key) {
  auto it = table_.find(key);
  if (it == table_.end()) it = table_.emplace(key, zeros_).first;
  return it->second;
}

std::vector<double> ToyPolicy::probabilities(const StateKey& key) const {
  auto lp = log_softmax(row(key));
  for (double& x : lp) x = std::exp(x);
  return lp;
}

double max_abs_diff(const ToyPolicy& a, const ToyPolicy& b) {
  if (!(a.vocab() == b.vocab()) || a.order() != b.order()) {
    throw ShapeMismatch("policies differ in vocabulary or order");
  }
  double worst = 0.0;
  auto scan = [&worst](const ToyPolicy& x, const ToyPolicy& y) {
    for (const auto& [key, values] : x.table()) {
      auto other = y.row(key);
      for (std::size_t i = 0; i < values.size(); ++i) worst = std::max(worst, std::abs(values[i] - other[i]));
    }
  };
  scan(a, b);
  scan(b, a);
  return worst;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double x : logits) sum += std::exp(x - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::vector<double> token_logprobs(const ToyPolicy& policy, std::span<const TokenId> prompt,
                                   std::span<const TokenId> tokens) {
  std::vector<double> out;
  out.reserve(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] < 0 || static_cast<std::size_t>(tokens[t]) >= policy.vocab().size()) {
      throw UnknownToken("token id out of range: " + std::to_string(tokens[t]));
    }
    const auto lp = log_softmax(policy.row(policy.state(prompt, tokens.first(t))));
    out.push_back(lp[static_cast<std::size_t>(tokens[t])]);
  }
  return out;
}

double sequence_logprob(const ToyPolicy& policy, std::span<const TokenId> prompt,
                        std::span<const TokenId> tokens) {
  const auto lps = token_logprobs(policy, prompt, tokens);
  return std::accumulate(lps.begin(), lps.end(), 0.0);
}

void accumulate_logprob_grad(const ToyPolicy& policy, std::span<const TokenId> prompt,
                             std::span<const TokenId> tokens, std::span<const double> weights,
                             GradTable& grad) {
  if (!weights.empty() && weights.size() != tokens.size()) {
    throw Error("accumulate_logprob_grad: weights and tokens differ in length");
  }
  const std::size_t V = policy.vocab().size();
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const double w = weights.empty() ? 1.0 : weights[t];
    if (w == 0.0) continue;
    if (tokens[t] < 0 || static_cast<std::size_t>(tokens[t]) >= V) {
      throw UnknownToken("token id out of range: " + std::to_string(tokens[t]));
    }
    const StateKey key = policy.state(prompt, tokens.first(t));
    const auto lp = log_softmax(policy.row(key));
    auto it = grad.find(key);
    if (it == grad.end()) it = grad.emplace(key, std::vector<double>(V, 0.0)).first;
    auto& g = it->second;
    for (std::size_t j = 0; j < V; ++j) g[j] -= w * std::exp(lp[j]);
    g[static_cast<std::size_t>(tokens[t])] += w;
  }
}

GradTable logprob_grad(const ToyPolicy& policy, std::span<const TokenId> prompt,
                       std::span<const TokenId> tokens) {
  GradTable g;
  accumulate_logprob_grad(policy, prompt, tokens, {}, g);
  return g;
}

Sample sample_sequence(const ToyPolicy& policy, std::span<const TokenId> prompt, std::size_t max_len,
                       Rng& rng) {
  if (max_len < 1) throw Error("sample_sequence: max_len must be >= 1");
  Sample s;
  while (s.tokens.size() < max_len) {
    const auto lp = log_softmax(policy.row(policy.state(prompt, s.tokens)));
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t pick = lp.size() - 1;
    for (std::size_t j = 0; j < lp.size(); ++j) {
      acc += std::exp(lp[j]);
      if (u < acc) {
        pick = j;
        break;
      }
    }
    s.tokens.push_back(static_cast<TokenId>(pick));
    s.logprobs.push_back(lp[pick]);
    if (static_cast<TokenId>(pick) == policy.vocab().eos()) break;
  }
  return s;
}

void AdamW::step(ToyPolicy& policy, const GradTable& grad, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const std::size_t V = policy.vocab().size();
  for (const auto& [key, g] : grad) policy.mutable_row(key);
  for (auto& [key, theta] : policy.table()) {
    auto git = grad.find(key);
    auto& m = m_.try_emplace(key, V, 0.0).first->second;
    auto& v = v_.try_emplace(key, V, 0.0).first->second;
    for (std::size_t j = 0; j < V; ++j) {
      const double g = git == grad.end() ? 0.0 : git->second[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      theta[j] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * theta[j]);
    }
  }
}

std::vector<TokenId> greedy_sequence(const ToyPolicy& policy, std::span<const TokenId> prompt, std::size_t max_len) {
  std::vector<TokenId> out;
  while (out.size() < max_len) {
    const auto row = policy.row(policy.state(prompt, out));
    const auto best = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
    out.push_back(best);
    if (best == policy.vocab().eos()) break;
  }
  return out;
}

void SftConfig::validate() const {
  if (!(peak_lr > 0.0)) throw Error("SftConfig: peak_lr must be > 0");
  if (!(floor_fraction > 0.0 && floor_fraction < 1.0)) throw Error("SftConfig: floor_fraction must lie in (0, 1)");
  if (warmup_steps < 0) throw Error("SftConfig: warmup_steps must be >= 0");
  if (total_steps != 0 && warmup_steps >= total_steps) {
    throw Error("SftConfig: warmup_steps must be < total_steps");
  }
  if (epochs < 0) throw Error("SftConfig: epochs must be >= 0");
  if (batch_size < 1) throw Error("SftConfig: batch_size must be >= 1");
  if (context_limit < 1) throw Error("SftConfig: context_limit must be >= 1");
}

double lr_at_step(int step, const SftConfig& cfg) {
  if (cfg.total_steps <= 0 || cfg.warmup_steps >= cfg.total_steps) {
    throw Error("lr_at_step: need 0 <= warmup_steps < total_steps");
  }
  step = std::clamp(step, 0, cfg.total_steps);
  const double peak = cfg.peak_lr;
  if (step < cfg.warmup_steps) return peak * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  const double floor = cfg.floor_fraction * peak;
  const double u = static_cast<double>(step - cfg.warmup_steps) /
                   static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return floor + (peak - floor) * (1.0 + std::cos(std::numbers::pi * u)) / 2.0;
}

double mean_token_cross_entropy(const ToyPolicy& policy, const std::vector<SftExample>& batch) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& ex : batch) {
    for (double lp : token_logprobs(policy, ex.prompt, ex.target)) total -= lp;
    n += ex.target.size();
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

SftResult sft_train(ToyPolicy& policy, const std::vector<SftExample>& dataset, const SftConfig& cfg_in) {
  cfg_in.validate();
  SftResult result;
  if (cfg_in.epochs == 0 || dataset.empty()) return result;

  // Respect the context limit by truncating targets.
  std::vector<SftExample> data = dataset;
  for (auto& ex : data) {
    if (ex.prompt.size() >= cfg_in.context_limit) throw Error("sft_train: prompt exceeds context limit");
    const std::size_t room = cfg_in.context_limit - ex.prompt.size();
    if (ex.target.size() > room) ex.target.resize(room);
  }

  const std::size_t batch = static_cast<std::size_t>(cfg_in.batch_size);
  const std::size_t batches_per_epoch = (data.size() + batch - 1) / batch;
  const int planned = cfg_in.epochs * static_cast<int>(batches_per_epoch);
  SftConfig cfg = cfg_in;
  if (cfg.total_steps == 0) cfg.total_steps = planned;
  if (cfg.warmup_steps >= cfg.total_steps) throw Error("sft_train: warmup_steps must be < total steps");

  AdamW opt(cfg.adam);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      std::vector<SftExample> mb;
      for (std::size_t k = b * batch; k < std::min(order.size(), (b + 1) * batch); ++k) mb.push_back(data[order[k]]);
      std::size_t n_tokens = 0;
      for (const auto& ex : mb) n_tokens += ex.target.size();
      if (n_tokens == 0) continue;
      result.loss_history.push_back(mean_token_cross_entropy(policy, mb));
      // Gradient of the mean negative log-likelihood.
      GradTable grad;
      for (const auto& ex : mb) {
        std::vector<double> w(ex.target.size(), -1.0 / static_cast<double>(n_tokens));
        accumulate_logprob_grad(policy, ex.prompt, ex.target, w, grad);
      }
      ++step;
      const double lr = lr_at_step(step, cfg);
      result.lr_history.push_back(lr);
      opt.step(policy, grad, lr);
    }
  }
  return result;
}

std::vector<SyntheticTask> gen_tasks(std::string_view kind, std::size_t count, std::uint64_t seed) {
  if (count < 1) throw Error("gen_tasks: count must be >= 1");
  Rng rng = Rng::derive(seed, {0x7461736bULL});
  std::vector<SyntheticTask> out;
  out.reserve(count);
  char idbuf[32];
  for (std::size_t i = 0; i < count; ++i) {
    SyntheticTask t;
    std::snprintf(idbuf, sizeof idbuf, "-%05zu", i);
    t.id = std::string(kind) + idbuf;
    if (kind == "add1" || kind == "add1-full") {
      int a, b;
      do {
        a = static_cast<int>(rng.below(10));
        b = static_cast<int>(rng.below(10));
      } while (kind == "add1" && a + b > 9);
      t.prompt = std::to_string(a) + "+" + std::to_string(b) + "=";
      t.gold_answer = std::to_string(a + b);
      t.verifier_kind = VerifierKind::exact;
    } else if (kind == "half") {
      const int n = static_cast<int>(rng.below(20));
      t.prompt = std::to_string(n) + "/2=";
      t.gold_answer = text::format_double(n / 2.0);
      t.verifier_kind = VerifierKind::bounds;
      t.lower = n / 2.0 - 0.5;
      t.upper = n / 2.0 + 0.5;
    } else {
      throw Error("gen_tasks: unknown kind '" + std::string(kind) + "'");
    }
    out.push_back(std::move(t));
  }
  return out;
}

records::QaRecord to_qa(const SyntheticTask& task) {
  records::QaRecord qa;
  qa.id = task.id;
  qa.question = task.prompt;
  qa.gold_answer = task.gold_answer;
  qa.category = records::Category::math;
  qa.language = records::Language::en;
  qa.verifiability = records::Verifiability::verifiable;
  qa.subkind = task.verifier_kind == VerifierKind::exact
                   ? "synthetic:exact"
                   : "synthetic:bounds:" + text::format_double(task.lower) + ":" + text::format_double(task.upper);
  return qa;
}

SyntheticTask from_qa(const records::QaRecord& qa) {
  if (!qa.gold_answer) throw Error("from_qa: record " + qa.id + " has no gold answer");
  SyntheticTask t;
  t.id = qa.id;
  t.prompt = qa.question;
  t.gold_answer = *qa.gold_answer;
  constexpr std::string_view kBounds = "synthetic:bounds:";
  if (qa.subkind.rfind(kBounds, 0) == 0) {
    const std::string rest = qa.subkind.substr(kBounds.size());
    const auto colon = rest.find(':');
    if (colon == std::string::npos || !text::parse_double(rest.substr(0, colon), t.lower) ||
        !text::parse_double(rest.substr(colon + 1), t.upper)) {
      throw Error("from_qa: malformed bounds subkind '" + qa.subkind + "'");
    }
    t.verifier_kind = VerifierKind::bounds;
  }
  return t;
}

std::string serialize(const ToyPolicy& policy) {
  std::string out = "wingpt-policy 1\n";
  out += "order " + std::to_string(policy.order()) + "\n";
  out += "vocab " + std::to_string(policy.vocab().size()) + "\n";
  for (const auto& tok : policy.vocab().tokens()) out += nlohmann::json(tok).dump() + "\n";
  out += "rows " + std::to_string(policy.table().size()) + "\n";
  for (const auto& [key, values] : policy.table()) {
    for (std::size_t i = 0; i < key.size(); ++i) {
      if (i > 0) out.push_back(' ');
      out += std::to_string(key[i]);
    }
    out.push_back('\t');
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i > 0) out.push_back(' ');
      out += text::format_double(values[i]);
    }
    out.push_back('\n');
  }
  return out;
}

ToyPolicy deserialize_policy(std::string_view data) {
  std::istringstream in{std::string(data)};
  std::string line;
  auto expect = [&](const std::string& prefix) -> std::string {
    if (!std::getline(in, line) || line.rfind(prefix, 0) != 0) throw Error("policy checkpoint: expected '" + prefix + "'");
    return line.substr(prefix.size());
  };
  if (expect("wingpt-policy ") != "1") throw Error("policy checkpoint: unsupported version");
  const int order = std::stoi(expect("order "));
  const std::size_t V = std::stoul(expect("vocab "));
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < V; ++i) {
    if (!std::getline(in, line)) throw Error("policy checkpoint: truncated vocabulary");
    tokens.push_back(nlohmann::json::parse(line).get<std::string>());
  }
  ToyPolicy policy(Vocabulary(std::move(tokens)), order);
  const std::size_t rows = std::stoul(expect("rows "));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) throw Error("policy checkpoint: truncated rows");
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error("policy checkpoint: malformed row");
    StateKey key;
    std::istringstream ks(line.substr(0, tab));
    for (TokenId id; ks >> id;) key.push_back(id);
    std::vector<double> values;
    for (const auto& tok : text::split_whitespace(std::string_view(line).substr(tab + 1))) {
      double v = 0.0;
      if (!text::parse_double(tok, v)) throw Error("policy checkpoint: bad value '" + tok + "'");
      values.push_back(v);
    }
    if (values.size() != V) throw Error("policy checkpoint: row width mismatch");
    policy.mutable_row(key) = std::move(values);
  }
  return policy;
}

}  // namespace wingpt::policy
