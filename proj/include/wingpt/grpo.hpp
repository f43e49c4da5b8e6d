#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wingpt/policy.hpp"
#include "wingpt/verify.hpp"

// Group Relative Policy Optimization over the toy policy, plus parameter merging.
namespace wingpt::grpo {

using policy::GradTable;
using policy::TokenId;
using policy::ToyPolicy;

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

struct Rollout {
  std::vector<TokenId> tokens;
  std::vector<double> old_logprobs;
  std::string text;        // decoded completion
  std::string diagnostic;  // set when the reward function failed
};

struct RolloutGroup {
  std::size_t prompt_index = 0;
  std::vector<TokenId> prompt;
  std::vector<Rollout> rollouts;
  std::vector<double> rewards;
  std::vector<double> advantages;  // empty until normalize()

  bool normalized() const { return !advantages.empty(); }
  void normalize();
};

struct GrpoConfig {
  std::size_t group_size = 12;
  std::size_t batch_prompts = 128;
  double clip_epsilon = 0.2;
  double kl_beta = 0.0;
  double learning_rate = 0.05;
  int steps = 2000;
  std::size_t max_len = 8;
  int inner_epochs = 1;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  policy::AdamConfig adam;

  void validate() const;
};

// Reward for one completion of prompt `prompt_index`. Exceptions become reward
// 0 with the message kept as the rollout diagnostic.
using RewardFn = std::function<double(std::size_t prompt_index, const std::string& completion)>;

RolloutGroup collect_group(const ToyPolicy& policy, std::span<const TokenId> prompt, std::size_t group_size,
                           const RewardFn& reward_fn, Rng& rng, std::size_t max_len,
                           std::size_t prompt_index = 0);

// (r - mean) / (population std + 1e-8); constant rewards give all zeros.
std::vector<double> normalize_advantages(std::span<const double> rewards);

struct LossResult {
  double loss = 0.0;
  double kl = 0.0;             // mean per-token KL estimate
  double clipped_fraction = 0.0;
  GradTable grad;              // d loss / d logits
};

// -(1/G) sum_i (1/|o_i|) sum_t [min(rho A, clip(rho, 1-eps, 1+eps) A) - beta * kl_t]
// with the unbiased estimator kl_t = r - log r - 1, r = pi_ref / pi.
LossResult grpo_loss(const ToyPolicy& policy, const RolloutGroup& group, const GrpoConfig& cfg,
                     const ToyPolicy* reference = nullptr);

// Mean of grpo_loss over groups, gradients averaged the same way.
LossResult batch_loss(const ToyPolicy& policy, const std::vector<RolloutGroup>& groups, const GrpoConfig& cfg,
                      const ToyPolicy* reference = nullptr);

struct StepMetrics {
  int step = 0;
  double mean_reward = 0.0;
  double loss = 0.0;  // at the rollout policy, before the update
  double lr = 0.0;
  double kl = 0.0;
};

using StepObserver = std::function<void(const StepMetrics&, const std::vector<RolloutGroup>&)>;

struct GrpoResult {
  std::vector<StepMetrics> history;
};

GrpoResult grpo_train(ToyPolicy& policy, const std::vector<std::vector<TokenId>>& prompts,
                      const RewardFn& reward_fn, const GrpoConfig& cfg, const ToyPolicy* reference = nullptr,
                      const StepObserver& observer = {});

// One JSON object per step: kl, loss, lr, mean_reward, step.
std::string metrics_jsonl(const std::vector<StepMetrics>& history);

// Rule reward for synthetic tasks, minus the length penalty. Exact tasks go
// through verify::rule_reward; bounds tasks check the boxed number.
RewardFn task_reward_fn(std::vector<policy::SyntheticTask> tasks, verify::LengthPenaltyConfig cfg);

// weight_a * a + (1 - weight_a) * b over the logit tables.
ToyPolicy merge_parameters(const ToyPolicy& a, const ToyPolicy& b, double weight_a);

}  // namespace wingpt::grpo
