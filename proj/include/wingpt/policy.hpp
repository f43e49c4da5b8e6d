#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wingpt/common.hpp"
#include "wingpt/records.hpp"

// Toy autoregressive policy: a softmax table indexed by (prompt, last m
// generated tokens). Log-probabilities and their gradients are exact.
namespace wingpt::policy {

using TokenId = std::int32_t;

class UnknownToken : public Error {
 public:
  using Error::Error;
};

// Special tags and multi-character symbols are atomic; everything else is one
// token per character. Whitespace separates tokens and is dropped.
class Vocabulary {
 public:
  explicit Vocabulary(std::vector<std::string> tokens);

  // <eos>, <think>, </think>, \boxed{, }, digits, + - = / .
  static Vocabulary standard();

  std::size_t size() const { return tokens_.size(); }
  TokenId eos() const { return eos_; }
  const std::string& token(TokenId id) const;
  TokenId id(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Greedy longest match.
  std::vector<TokenId> encode(std::string_view text) const;
  // Concatenation; <eos> is dropped.
  std::string decode(std::span<const TokenId> ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, TokenId, std::less<>> index_;
  TokenId eos_ = -1;
  std::size_t longest_ = 1;
};

// Prompt ids, a -1 separator, then the last `order` generated ids padded with -2.
using StateKey = std::vector<TokenId>;
using LogitTable = std::map<StateKey, std::vector<double>>;
using GradTable = LogitTable;

class ToyPolicy {
 public:
  explicit ToyPolicy(Vocabulary vocab, int order = 2);

  const Vocabulary& vocab() const { return vocab_; }
  int order() const { return order_; }

  StateKey state(std::span<const TokenId> prompt, std::span<const TokenId> generated) const;

  // Missing rows read as all-zero logits (the uniform distribution).
  std::span<const double> row(const StateKey& key) const;
  std::vector<double>& mutable_row(const StateKey& key);

  const LogitTable& table() const { return table_; }
  LogitTable& table() { return table_; }

  std::vector<double> probabilities(const StateKey& key) const;

 private:
  Vocabulary vocab_;
  int order_;
  LogitTable table_;
  std::vector<double> zeros_;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

// Largest absolute logit difference; absent rows count as zero.
double max_abs_diff(const ToyPolicy& a, const ToyPolicy& b);

std::vector<double> log_softmax(std::span<const double> logits);

// Per-token log pi(token_t | prompt, tokens_<t).
std::vector<double> token_logprobs(const ToyPolicy& policy, std::span<const TokenId> prompt,
                                   std::span<const TokenId> tokens);
double sequence_logprob(const ToyPolicy& policy, std::span<const TokenId> prompt,
                        std::span<const TokenId> tokens);

// grad += weight * d/dlogits log pi(tokens | prompt). Each token t contributes
// weights[t] * (onehot - p) to its state's row when per-token weights are given.
void accumulate_logprob_grad(const ToyPolicy& policy, std::span<const TokenId> prompt,
                             std::span<const TokenId> tokens, std::span<const double> weights,
                             GradTable& grad);
GradTable logprob_grad(const ToyPolicy& policy, std::span<const TokenId> prompt,
                       std::span<const TokenId> tokens);

struct Sample {
  std::vector<TokenId> tokens;
  std::vector<double> logprobs;
};

// Stops after emitting <eos> (which is kept) or after max_len tokens.
Sample sample_sequence(const ToyPolicy& policy, std::span<const TokenId> prompt, std::size_t max_len,
                       Rng& rng);

// Argmax decoding with the same stopping rule; ties go to the lower id.
std::vector<TokenId> greedy_sequence(const ToyPolicy& policy, std::span<const TokenId> prompt, std::size_t max_len);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// AdamW over the logit table. Gradients are of the loss being minimized.
class AdamW {
 public:
  explicit AdamW(AdamConfig cfg = {}) : cfg_(cfg) {}
  void step(ToyPolicy& policy, const GradTable& grad, double lr);
  long long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  long long t_ = 0;
  LogitTable m_;
  LogitTable v_;
};

struct SftConfig {
  double peak_lr = 1e-5;
  int warmup_steps = 500;
  // 0 means epochs * ceil(dataset / batch_size).
  int total_steps = 0;
  double floor_fraction = 0.1;
  int epochs = 2;
  int batch_size = 8;
  std::size_t context_limit = 16384;
  std::uint64_t seed = 0;
  AdamConfig adam;

  void validate() const;
};

// Linear warmup 0 -> peak, then cosine from peak down to floor_fraction * peak
// at total_steps. Needs an explicit total_steps.
double lr_at_step(int step, const SftConfig& cfg);

struct SftExample {
  std::vector<TokenId> prompt;
  std::vector<TokenId> target;
};

struct SftResult {
  std::vector<double> loss_history;  // mean token cross-entropy before each step
  std::vector<double> lr_history;
};

// Teacher-forced cross-entropy with AdamW and the warmup/cosine schedule.
SftResult sft_train(ToyPolicy& policy, const std::vector<SftExample>& dataset, const SftConfig& cfg);

double mean_token_cross_entropy(const ToyPolicy& policy, const std::vector<SftExample>& batch);

enum class VerifierKind { exact, bounds };

struct SyntheticTask {
  std::string id;
  std::string prompt;
  std::string gold_answer;
  VerifierKind verifier_kind = VerifierKind::exact;
  double lower = 0.0;
  double upper = 0.0;
};

// Kinds: "add1" (single-digit operands with a single-digit sum, exact),
// "add1-full" (any two single-digit operands, exact),
// "half" (n/2 for n in 0..19, bounds +-0.5).
std::vector<SyntheticTask> gen_tasks(std::string_view kind, std::size_t count, std::uint64_t seed);

records::QaRecord to_qa(const SyntheticTask& task);
SyntheticTask from_qa(const records::QaRecord& qa);

// Versioned flat text checkpoint.
std::string serialize(const ToyPolicy& policy);
ToyPolicy deserialize_policy(std::string_view text);

}  // namespace wingpt::policy
