#include "wingpt/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "json.hpp"
#include "wingpt/backend.hpp"

namespace wingpt::grpo {

void RolloutGroup::normalize() { advantages = normalize_advantages(rewards); }

void GrpoConfig::validate() const {
  if (group_size < 2) throw Error("GrpoConfig: group_size must be >= 2");
  if (batch_prompts < 1) throw Error("GrpoConfig: batch_prompts must be >= 1");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw Error("GrpoConfig: clip_epsilon must lie in (0, 1)");
  if (!(kl_beta >= 0.0)) throw Error("GrpoConfig: kl_beta must be >= 0");
  if (!(learning_rate > 0.0)) throw Error("GrpoConfig: learning_rate must be > 0");
  if (steps < 0) throw Error("GrpoConfig: steps must be >= 0");
  if (max_len < 1) throw Error("GrpoConfig: max_len must be >= 1");
  if (inner_epochs < 1) throw Error("GrpoConfig: inner_epochs must be >= 1");
}

RolloutGroup collect_group(const ToyPolicy& policy, std::span<const TokenId> prompt, std::size_t group_size,
                           const RewardFn& reward_fn, Rng& rng, std::size_t max_len, std::size_t prompt_index) {
  if (group_size < 2) throw Error("collect_group: group_size must be >= 2");
  RolloutGroup g;
  g.prompt_index = prompt_index;
  g.prompt.assign(prompt.begin(), prompt.end());
  g.rollouts.reserve(group_size);
  g.rewards.reserve(group_size);
  for (std::size_t i = 0; i < group_size; ++i) {
    policy::Sample s = policy::sample_sequence(policy, prompt, max_len, rng);
    Rollout r;
    r.text = policy.vocab().decode(s.tokens);
    r.tokens = std::move(s.tokens);
    r.old_logprobs = std::move(s.logprobs);
    double reward = 0.0;
    try {
      reward = reward_fn(prompt_index, r.text);
    } catch (const std::exception& e) {
      r.diagnostic = e.what();
    }
    g.rewards.push_back(reward);
    g.rollouts.push_back(std::move(r));
  }
  return g;
}

std::vector<double> normalize_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw Error("normalize_advantages: need at least 2 rewards");
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out(rewards.size(), 0.0);
  if (sd == 0.0) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / (sd + 1e-8);
  return out;
}

LossResult grpo_loss(const ToyPolicy& policy, const RolloutGroup& group, const GrpoConfig& cfg,
                     const ToyPolicy* reference) {
  if (!group.normalized()) throw Error("grpo_loss: group advantages are not normalized");
  const std::size_t G = group.rollouts.size();
  if (group.advantages.size() != G || group.rewards.size() != G) {
    throw LengthMismatch("grpo_loss: rollouts, rewards and advantages differ in count");
  }
  const bool use_kl = cfg.kl_beta > 0.0 && reference != nullptr;
  LossResult out;
  std::size_t kl_tokens = 0, total_tokens = 0, clipped = 0;
  for (std::size_t i = 0; i < G; ++i) {
    const Rollout& r = group.rollouts[i];
    if (r.tokens.size() != r.old_logprobs.size()) {
      throw LengthMismatch("grpo_loss: rollout " + std::to_string(i) + " has " + std::to_string(r.tokens.size()) +
                           " tokens but " + std::to_string(r.old_logprobs.size()) + " old log-probs");
    }
    if (r.tokens.empty()) continue;
    const double A = group.advantages[i];
    const double seq_w = 1.0 / (static_cast<double>(G) * static_cast<double>(r.tokens.size()));
    const auto new_lp = policy::token_logprobs(policy, group.prompt, r.tokens);
    std::vector<double> ref_lp;
    if (use_kl) ref_lp = policy::token_logprobs(*reference, group.prompt, r.tokens);

    // Per-token coefficient c_t with d loss = c_t * d log pi(token_t).
    std::vector<double> coef(r.tokens.size(), 0.0);
    for (std::size_t t = 0; t < r.tokens.size(); ++t) {
      const double rho = std::exp(new_lp[t] - r.old_logprobs[t]);
      const double clipped_rho = std::clamp(rho, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
      const double unclipped_term = rho * A;
      const double clipped_term = clipped_rho * A;
      double objective;
      if (unclipped_term <= clipped_term) {
        objective = unclipped_term;
        coef[t] -= seq_w * rho * A;
      } else {
        objective = clipped_term;
        ++clipped;
      }
      if (use_kl) {
        const double ratio = std::exp(ref_lp[t] - new_lp[t]);
        const double kl = ratio - (ref_lp[t] - new_lp[t]) - 1.0;
        objective -= cfg.kl_beta * kl;
        // d kl / d log pi = 1 - ratio
        coef[t] += seq_w * cfg.kl_beta * (1.0 - ratio);
        out.kl += kl;
        ++kl_tokens;
      }
      out.loss -= seq_w * objective;
      ++total_tokens;
    }
    policy::accumulate_logprob_grad(policy, group.prompt, r.tokens, coef, out.grad);
  }
  if (kl_tokens > 0) out.kl /= static_cast<double>(kl_tokens);
  if (total_tokens > 0) out.clipped_fraction = static_cast<double>(clipped) / static_cast<double>(total_tokens);
  return out;
}

LossResult batch_loss(const ToyPolicy& policy, const std::vector<RolloutGroup>& groups, const GrpoConfig& cfg,
                      const ToyPolicy* reference) {
  LossResult out;
  if (groups.empty()) return out;
  const double inv = 1.0 / static_cast<double>(groups.size());
  for (const auto& g : groups) {
    LossResult part = grpo_loss(policy, g, cfg, reference);
    out.loss += inv * part.loss;
    out.kl += inv * part.kl;
    out.clipped_fraction += inv * part.clipped_fraction;
    for (auto& [key, values] : part.grad) {
      auto& dst = out.grad.try_emplace(key, values.size(), 0.0).first->second;
      for (std::size_t j = 0; j < values.size(); ++j) dst[j] += inv * values[j];
    }
  }
  return out;
}

GrpoResult grpo_train(ToyPolicy& policy, const std::vector<std::vector<TokenId>>& prompts,
                      const RewardFn& reward_fn, const GrpoConfig& cfg, const ToyPolicy* reference,
                      const StepObserver& observer) {
  cfg.validate();
  if (prompts.empty()) throw Error("grpo_train: no prompts");
  GrpoResult result;
  policy::AdamW opt(cfg.adam);

  // Prompts are visited in seeded passes over a shuffled order.
  Rng order_rng = Rng::derive(cfg.seed, {0x6f72646572ULL});
  std::vector<std::size_t> order(prompts.size());
  std::size_t cursor = order.size();

  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<std::size_t> batch(cfg.batch_prompts);
    for (auto& slot : batch) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
        cursor = 0;
      }
      slot = order[cursor++];
    }

    std::vector<RolloutGroup> groups(batch.size());
    backend::parallel_for(batch.size(), cfg.workers, [&](std::size_t b) {
      Rng rng = Rng::derive(cfg.seed, {static_cast<std::uint64_t>(step), b, batch[b]});
      groups[b] = collect_group(policy, prompts[batch[b]], cfg.group_size, reward_fn, rng, cfg.max_len, batch[b]);
      groups[b].normalize();
    });

    StepMetrics m;
    m.step = step;
    m.lr = cfg.learning_rate;
    double reward_sum = 0.0;
    std::size_t reward_count = 0;
    for (const auto& g : groups) {
      for (double r : g.rewards) reward_sum += r;
      reward_count += g.rewards.size();
    }
    m.mean_reward = reward_sum / static_cast<double>(reward_count);

    for (int epoch = 0; epoch < cfg.inner_epochs; ++epoch) {
      LossResult lr = batch_loss(policy, groups, cfg, reference);
      if (epoch == 0) {
        m.loss = lr.loss;
        m.kl = lr.kl;
      }
      opt.step(policy, lr.grad, cfg.learning_rate);
    }
    if (observer) observer(m, groups);
    result.history.push_back(m);
  }
  return result;
}

std::string metrics_jsonl(const std::vector<StepMetrics>& history) {
  std::string out;
  for (const auto& m : history) {
    nlohmann::json j{{"step", m.step}, {"mean_reward", m.mean_reward}, {"loss", m.loss}, {"lr", m.lr}, {"kl", m.kl}};
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

ToyPolicy merge_parameters(const ToyPolicy& a, const ToyPolicy& b, double weight_a) {
  if (!(a.vocab() == b.vocab()) || a.order() != b.order()) {
    throw policy::ShapeMismatch("merge_parameters: policies differ in vocabulary or order");
  }
  if (!(weight_a >= 0.0 && weight_a <= 1.0)) throw Error("merge_parameters: weight must lie in [0, 1]");
  const double wb = 1.0 - weight_a;
  ToyPolicy out(a.vocab(), a.order());
  auto blend = [&](const policy::StateKey& key) {
    auto& dst = out.mutable_row(key);
    const auto ra = a.row(key);
    const auto rb = b.row(key);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = weight_a * ra[j] + wb * rb[j];
  };
  for (const auto& [key, values] : a.table()) blend(key);
  for (const auto& [key, values] : b.table()) {
    if (!a.table().count(key)) blend(key);
  }
  return out;
}

RewardFn task_reward_fn(std::vector<policy::SyntheticTask> tasks, verify::LengthPenaltyConfig cfg) {
  cfg.validate();
  auto shared = std::make_shared<const std::vector<policy::SyntheticTask>>(std::move(tasks));
  return [shared, cfg](std::size_t index, const std::string& completion) {
    const auto& task = shared->at(index);
    if (task.verifier_kind == policy::VerifierKind::exact) {
      return verify::rule_reward(completion, task.gold_answer, cfg).value;
    }
    const std::size_t length = verify::whitespace_token_count(completion);
    const auto value = text::parse_double(verify::extract_boxed(completion));
    const bool correct = value && verify::verify_bounds(*value, task.lower, task.upper).correct;
    return std::max(0.0, (correct ? 1.0 : 0.0) - verify::length_penalty(correct, length, cfg));
  };
}

}  // namespace wingpt::grpo
