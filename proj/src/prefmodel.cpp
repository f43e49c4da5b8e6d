#include "wingpt/prefmodel.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace wingpt::prefmodel {

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_dim(const ScalarScorer& s, const FeatureVector& f) {
  if (s.weights.size() != f.size()) {
    throw DimensionMismatch("scorer has dimension " + std::to_string(s.weights.size()) +
                            ", features have " + std::to_string(f.size()));
  }
}

}  // namespace

FeatureVector extract_features(std::string_view prompt, std::string_view response) {
  FeatureVector f(kFeatureDim, 0.0);
  const auto tokens = text::split_whitespace(response);
  f[0] = std::min(1.0, static_cast<double>(tokens.size()) / kLengthScale);
  if (tokens.size() >= 2) {
    std::set<std::pair<std::string, std::string>> bigrams;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) bigrams.emplace(tokens[i], tokens[i + 1]);
    f[1] = static_cast<double>(bigrams.size()) / static_cast<double>(tokens.size() - 1);
  }
  const std::set<std::string> distinct(tokens.begin(), tokens.end());
  if (!distinct.empty()) {
    const auto prompt_tokens = text::split_whitespace(prompt);
    const std::set<std::string> prompt_set(prompt_tokens.begin(), prompt_tokens.end());
    std::size_t shared = 0;
    for (const auto& t : distinct) shared += prompt_set.count(t);
    f[2] = static_cast<double>(shared) / static_cast<double>(distinct.size());
  }
  f[3] = text::count_occurrences(response, "<think>") == text::count_occurrences(response, "</think>") ? 1.0 : 0.0;
  std::size_t digits = 0, visible = 0;
  for (char c : response) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') continue;
    ++visible;
    if (c >= '0' && c <= '9') ++digits;
  }
  if (visible > 0) f[4] = static_cast<double>(digits) / static_cast<double>(visible);
  return f;
}

double score(const ScalarScorer& scorer, const FeatureVector& features) {
  check_dim(scorer, features);
  double s = scorer.bias;
  for (std::size_t i = 0; i < features.size(); ++i) s += scorer.weights[i] * features[i];
  return s;
}

void BtConfig::validate() const {
  if (!(scale_alpha > 0.0)) throw Error("BtConfig: scale_alpha must be > 0");
  if (!(learning_rate > 0.0)) throw Error("BtConfig: learning_rate must be > 0");
  if (epochs < 0) throw Error("BtConfig: epochs must be >= 0");
}

double bt_scale(const BtConfig& cfg, std::optional<double> magnitude) {
  double s = cfg.scale_alpha;
  if (cfg.use_magnitude && magnitude) s *= *magnitude;
  return s;
}

double bt_loss(double chosen_logit, double rejected_logit, const BtConfig& cfg,
               std::optional<double> magnitude) {
  return softplus(-bt_scale(cfg, magnitude) * (chosen_logit - rejected_logit));
}

double bt_loss_grad(double chosen_logit, double rejected_logit, const BtConfig& cfg,
                    std::optional<double> magnitude) {
  const double s = bt_scale(cfg, magnitude);
  return -s * sigmoid(-s * (chosen_logit - rejected_logit));
}

std::vector<FeaturePair> featurize(const std::vector<records::PreferencePair>& pairs,
                                   const FeatureExtractor& extractor) {
  std::vector<FeaturePair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back({extractor(p.prompt, p.chosen), extractor(p.prompt, p.rejected), p.magnitude});
  }
  return out;
}

double mean_bt_loss(const ScalarScorer& scorer, const std::vector<FeaturePair>& pairs, const BtConfig& cfg) {
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : pairs) total += bt_loss(score(scorer, p.chosen), score(scorer, p.rejected), cfg, p.magnitude);
  return total / static_cast<double>(pairs.size());
}

TrainResult train_scorer(const std::vector<FeaturePair>& pairs, const BtConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw Error("train_scorer: need at least one pair");
  const std::size_t d = pairs.front().chosen.size();
  TrainResult result;
  result.scorer.weights.assign(d, 0.0);
  // Small seeded init; the bias cancels in every pairwise difference.
  Rng rng(cfg.seed);
  for (double& w : result.scorer.weights) w = 0.01 * rng.normal();

  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  std::vector<double> grad(d);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (const auto& p : pairs) {
      const double c = score(result.scorer, p.chosen);
      const double r = score(result.scorer, p.rejected);
      loss += bt_loss(c, r, cfg, p.magnitude);
      const double g = bt_loss_grad(c, r, cfg, p.magnitude);
      for (std::size_t i = 0; i < d; ++i) grad[i] += g * (p.chosen[i] - p.rejected[i]);
    }
    result.loss_history.push_back(loss * inv_n);
    for (std::size_t i = 0; i < d; ++i) result.scorer.weights[i] -= cfg.learning_rate * grad[i] * inv_n;
  }
  result.loss_history.push_back(mean_bt_loss(result.scorer, pairs, cfg));
  return result;
}

TrainResult train_scorer(const std::vector<records::PreferencePair>& pairs, const BtConfig& cfg,
                         const FeatureExtractor& extractor) {
  return train_scorer(featurize(pairs, extractor), cfg);
}

double eval_pairwise(const ScalarScorer& scorer, const std::vector<FeaturePair>& pairs) {
  if (pairs.empty()) return 0.0;
  double wins = 0.0;
  for (const auto& p : pairs) {
    const double c = score(scorer, p.chosen);
    const double r = score(scorer, p.rejected);
    if (c > r) {
      wins += 1.0;
    } else if (c == r) {
      wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs.size());
}

std::string serialize(const ScalarScorer& scorer) {
  std::string out = "wingpt-scorer 1\n";
  out += std::to_string(scorer.weights.size()) + "\n";
  for (double w : scorer.weights) out += text::format_double(w) + "\n";
  out += text::format_double(scorer.bias) + "\n";
  return out;
}

ScalarScorer deserialize_scorer(std::string_view data) {
  std::istringstream in{std::string(data)};
  std::string magic;
  int version = 0;
  std::size_t d = 0;
  if (!(in >> magic >> version) || magic != "wingpt-scorer" || version != 1) {
    throw Error("scorer file: bad header");
  }
  if (!(in >> d)) throw Error("scorer file: missing dimension");
  ScalarScorer s;
  s.weights.resize(d);
  for (double& w : s.weights) {
    if (!(in >> w)) throw Error("scorer file: truncated weights");
  }
  if (!(in >> s.bias)) throw Error("scorer file: missing bias");
  return s;
}

}  // namespace wingpt::prefmodel
