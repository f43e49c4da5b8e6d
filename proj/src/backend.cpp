#include "wingpt/backend.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace wingpt::backend {

void ScriptedBackend::add(const std::string& prompt, std::vector<std::string> replies) {
  add_by_hash(sha256_hex(prompt), std::move(replies));
}

void ScriptedBackend::add_by_hash(const std::string& prompt_sha256, std::vector<std::string> replies) {
  if (replies.empty()) throw Error("ScriptedBackend: empty reply list");
  std::lock_guard lock(mu_);
  replies_[prompt_sha256] = std::move(replies);
  cursor_[prompt_sha256] = 0;
}

std::string ScriptedBackend::complete(const std::string& prompt) {
  const std::string key = sha256_hex(prompt);
  std::lock_guard lock(mu_);
  ++calls_;
  auto it = replies_.find(key);
  if (it == replies_.end()) {
    if (default_) return *default_;
    throw BackendUnavailable("ScriptedBackend: no reply scripted for prompt " + key);
  }
  std::size_t& i = cursor_[key];
  const std::string& reply = it->second[std::min(i, it->second.size() - 1)];
  ++i;
  return reply;
}

std::size_t ScriptedBackend::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::string SequenceBackend::complete(const std::string& prompt) {
  std::lock_guard lock(mu_);
  prompts_.push_back(prompt);
  if (next_ >= replies_.size()) throw BackendUnavailable("SequenceBackend: script exhausted");
  return replies_[next_++];
}

std::size_t SequenceBackend::calls() const {
  std::lock_guard lock(mu_);
  return prompts_.size();
}

HttpChatConfig HttpChatConfig::from_env(std::string_view prefix) {
  HttpChatConfig cfg;
  const std::string p(prefix);
  if (const char* v = std::getenv((p + "_URL").c_str())) cfg.url = v;
  if (const char* v = std::getenv((p + "_API_KEY").c_str())) cfg.api_key = v;
  if (const char* v = std::getenv((p + "_MODEL").c_str())) cfg.model = v;
  return cfg;
}

HttpChatBackend::HttpChatBackend(HttpChatConfig cfg) : cfg_(std::move(cfg)) {
  const auto scheme_end = cfg_.url.find("://");
  if (cfg_.url.empty() || scheme_end == std::string::npos) {
    throw BackendUnavailable("judge endpoint URL is not set or has no scheme: '" + cfg_.url + "'");
  }
  const auto path_start = cfg_.url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    scheme_host_port_ = cfg_.url;
    path_ = "/v1/chat/completions";
  } else {
    scheme_host_port_ = cfg_.url.substr(0, path_start);
    path_ = cfg_.url.substr(path_start);
  }
}

std::string HttpChatBackend::request_body(const HttpChatConfig& cfg, const std::string& prompt) {
  nlohmann::json body;
  body["model"] = cfg.model;
  body["temperature"] = cfg.temperature;
  body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
  return body.dump();
}

std::string HttpChatBackend::parse_response(const std::string& body) {
  try {
    auto j = nlohmann::json::parse(body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendUnavailable(std::string("malformed chat-completions response: ") + e.what());
  }
}

std::string HttpChatBackend::complete(const std::string& prompt) {
  httplib::Client client(scheme_host_port_);
  client.set_read_timeout(cfg_.timeout);
  client.set_write_timeout(cfg_.timeout);
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
  const std::string body = request_body(cfg_, prompt);

  auto backoff = cfg_.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
    auto res = client.Post(path_, headers, body, "application/json");
    if (res && res->status == 200) return parse_response(res->body);
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
    } else {
      last_error = "HTTP " + std::to_string(res->status);
      const bool retryable = res->status == 429 || res->status >= 500;
      if (!retryable) break;
    }
    if (attempt < cfg_.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw BackendUnavailable("chat endpoint " + cfg_.url + " unavailable: " + last_error);
}

BoundedBackend::BoundedBackend(TextBackend& inner, std::ptrdiff_t max_in_flight)
    : inner_(inner), slots_(max_in_flight) {
  if (max_in_flight < 1) throw Error("BoundedBackend: max_in_flight must be >= 1");
}

std::string BoundedBackend::complete(const std::string& prompt) {
  slots_.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{slots_};
  return inner_.complete(prompt);
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  std::vector<std::jthread> threads;
  const std::size_t count = std::min(workers, n);
  threads.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  threads.clear();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace wingpt::backend
