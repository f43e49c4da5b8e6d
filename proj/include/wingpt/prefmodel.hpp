#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wingpt/common.hpp"
#include "wingpt/records.hpp"

// Preference reward model: a linear scalar head over text features trained
// with a scaled Bradley-Terry loss.
namespace wingpt::prefmodel {

using FeatureVector = std::vector<double>;

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

inline constexpr std::size_t kFeatureDim = 5;
// Responses this long (whitespace tokens) saturate the length feature.
inline constexpr double kLengthScale = 256.0;

// Five features, in order:
//   0 normalized length       min(1, tokens / 256)
//   1 distinct-bigram ratio   distinct bigrams / bigrams (0 under 2 tokens)
//   2 prompt overlap          distinct response tokens found in the prompt / distinct response tokens
//   3 tag balance             1 if "<think>" and "</think>" counts match, else 0
//   4 digit density           ASCII digits / non-whitespace bytes
FeatureVector extract_features(std::string_view prompt, std::string_view response);

using FeatureExtractor = std::function<FeatureVector(std::string_view, std::string_view)>;

struct ScalarScorer {
  std::vector<double> weights;
  double bias = 0.0;

  std::size_t dim() const { return weights.size(); }
  bool operator==(const ScalarScorer&) const = default;
};

double score(const ScalarScorer& scorer, const FeatureVector& features);

struct BtConfig {
  double scale_alpha = 1.0;
  bool use_magnitude = true;
  double learning_rate = 0.5;
  int epochs = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

// Effective sigmoid scale: alpha, times the pair magnitude when enabled and present.
double bt_scale(const BtConfig& cfg, std::optional<double> magnitude);

// -log sigmoid(s * (chosen - rejected)), computed stably.
double bt_loss(double chosen_logit, double rejected_logit, const BtConfig& cfg,
               std::optional<double> magnitude = std::nullopt);

// d loss / d chosen_logit; the rejected derivative is its negation.
double bt_loss_grad(double chosen_logit, double rejected_logit, const BtConfig& cfg,
                    std::optional<double> magnitude = std::nullopt);

struct FeaturePair {
  FeatureVector chosen;
  FeatureVector rejected;
  std::optional<double> magnitude;
};

std::vector<FeaturePair> featurize(const std::vector<records::PreferencePair>& pairs,
                                   const FeatureExtractor& extractor = extract_features);

struct TrainResult {
  ScalarScorer scorer;
  // Mean loss before each full-batch step, then once more after the last.
  std::vector<double> loss_history;
};

double mean_bt_loss(const ScalarScorer& scorer, const std::vector<FeaturePair>& pairs, const BtConfig& cfg);

// Full-batch gradient descent on the mean scaled BT loss.
TrainResult train_scorer(const std::vector<FeaturePair>& pairs, const BtConfig& cfg);
TrainResult train_scorer(const std::vector<records::PreferencePair>& pairs, const BtConfig& cfg,
                         const FeatureExtractor& extractor = extract_features);

// Fraction of pairs scored chosen > rejected; ties count half.
double eval_pairwise(const ScalarScorer& scorer, const std::vector<FeaturePair>& pairs);

// Versioned flat text: "wingpt-scorer 1", dimension, weights, bias.
std::string serialize(const ScalarScorer& scorer);
ScalarScorer deserialize_scorer(std::string_view text);

}  // namespace wingpt::prefmodel
