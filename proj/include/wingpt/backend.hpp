#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "wingpt/common.hpp"

// Text-completion backends shared by the judge, think-tracing, diagnostic
// agents and benchmark runner.
namespace wingpt::backend {

class BackendUnavailable : public Error {
 public:
  using Error::Error;
};

class TextBackend {
 public:
  virtual ~TextBackend() = default;
  // Must be safe to call from several threads at once.
  virtual std::string complete(const std::string& prompt) = 0;
};

// Replies keyed by the SHA-256 of the prompt. Repeated calls with the same
// prompt walk through the scripted replies, sticking on the last one.
class ScriptedBackend : public TextBackend {
 public:
  void add(const std::string& prompt, std::vector<std::string> replies);
  void add_by_hash(const std::string& prompt_sha256, std::vector<std::string> replies);
  void set_default(std::string reply) { default_ = std::move(reply); }

  std::string complete(const std::string& prompt) override;
  std::size_t calls() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::vector<std::string>> replies_;
  std::map<std::string, std::size_t> cursor_;
  std::optional<std::string> default_;
  std::size_t calls_ = 0;
};

// Returns replies in call order; throws BackendUnavailable once exhausted.
class SequenceBackend : public TextBackend {
 public:
  explicit SequenceBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  std::string complete(const std::string& prompt) override;
  std::size_t calls() const;
  const std::vector<std::string>& prompts() const { return prompts_; }

 private:
  mutable std::mutex mu_;
  std::vector<std::string> replies_;
  std::vector<std::string> prompts_;
  std::size_t next_ = 0;
};

class FunctionBackend : public TextBackend {
 public:
  explicit FunctionBackend(std::function<std::string(const std::string&)> fn) : fn_(std::move(fn)) {}
  std::string complete(const std::string& prompt) override { return fn_(prompt); }

 private:
  std::function<std::string(const std::string&)> fn_;
};

struct HttpChatConfig {
  // Full endpoint, e.g. http://127.0.0.1:8000/v1/chat/completions
  std::string url;
  std::string api_key;
  std::string model = "judge";
  double temperature = 0.0;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::seconds timeout{120};

  // <prefix>_URL, <prefix>_API_KEY, <prefix>_MODEL; the judge uses WINGPT_JUDGE.
  static HttpChatConfig from_env(std::string_view prefix = "WINGPT_JUDGE");
};

// OpenAI-compatible chat-completions client: the prompt goes out as a single
// user message and the first choice's content comes back.
class HttpChatBackend : public TextBackend {
 public:
  explicit HttpChatBackend(HttpChatConfig cfg);
  std::string complete(const std::string& prompt) override;

  static std::string request_body(const HttpChatConfig& cfg, const std::string& prompt);
  // Throws BackendUnavailable when the body has no choices[0].message.content.
  static std::string parse_response(const std::string& body);

 private:
  HttpChatConfig cfg_;
  std::string scheme_host_port_;
  std::string path_;
};

// Caps concurrent in-flight requests to an inner backend.
class BoundedBackend : public TextBackend {
 public:
  BoundedBackend(TextBackend& inner, std::ptrdiff_t max_in_flight);
  std::string complete(const std::string& prompt) override;

 private:
  TextBackend& inner_;
  std::counting_semaphore<> slots_;
};

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results are written by
// index so output order never depends on scheduling.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace wingpt::backend
