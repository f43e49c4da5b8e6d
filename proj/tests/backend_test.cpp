#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "wingpt/backend.hpp"

using namespace wingpt;
using namespace wingpt::backend;

TEST(ScriptedBackend, WalksRepliesAndSticksOnLast) {
  ScriptedBackend b;
  b.add("p", {"one", "two"});
  EXPECT_EQ(b.complete("p"), "one");
  EXPECT_EQ(b.complete("p"), "two");
  EXPECT_EQ(b.complete("p"), "two");
  EXPECT_EQ(b.calls(), 3u);
  EXPECT_THROW(b.complete("other"), BackendUnavailable);
  b.set_default("fallback");
  EXPECT_EQ(b.complete("other"), "fallback");
}

TEST(ScriptedBackend, KeyedByPromptHash) {
  ScriptedBackend b;
  b.add_by_hash(sha256_hex("hello"), {"hi"});
  EXPECT_EQ(b.complete("hello"), "hi");
}

TEST(SequenceBackend, ThrowsWhenExhausted) {
  SequenceBackend b({"a"});
  EXPECT_EQ(b.complete("x"), "a");
  EXPECT_THROW(b.complete("y"), BackendUnavailable);
  EXPECT_EQ(b.prompts(), (std::vector<std::string>{"x", "y"}));
}

TEST(ParallelFor, IndexOrderedAndComplete) {
  std::vector<int> out(1000, -1);
  parallel_for(out.size(), 8, [&](std::size_t i) { out[i] = static_cast<int>(i * i % 97); });
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], static_cast<int>(i * i % 97));
}

TEST(ParallelFor, RethrowsWorkerError) {
  EXPECT_THROW(parallel_for(100, 4,
                            [](std::size_t i) {
                              if (i == 37) throw Error("boom");
                            }),
               Error);
}

TEST(BoundedBackend, CapsConcurrency) {
  std::atomic<int> live{0}, peak{0};
  FunctionBackend slow([&](const std::string& p) {
    const int now = ++live;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --live;
    return p;
  });
  BoundedBackend bounded(slow, 3);
  parallel_for(40, 10, [&](std::size_t i) { EXPECT_EQ(bounded.complete(std::to_string(i)), std::to_string(i)); });
  EXPECT_LE(peak.load(), 3);
  EXPECT_GE(peak.load(), 1);
}

TEST(HttpChat, RequestBodyShape) {
  HttpChatConfig cfg;
  cfg.model = "m";
  const auto j = nlohmann::json::parse(HttpChatBackend::request_body(cfg, "hello"));
  EXPECT_EQ(j["model"], "m");
  EXPECT_EQ(j["messages"][0]["role"], "user");
  EXPECT_EQ(j["messages"][0]["content"], "hello");
}

TEST(HttpChat, ParseResponse) {
  EXPECT_EQ(HttpChatBackend::parse_response(R"({"choices":[{"message":{"role":"assistant","content":"ok"}}]})"), "ok");
  EXPECT_THROW(HttpChatBackend::parse_response(R"({"choices":[]})"), BackendUnavailable);
  EXPECT_THROW(HttpChatBackend::parse_response("not json"), BackendUnavailable);
}

TEST(HttpChat, MissingUrlIsUnavailable) { EXPECT_THROW(HttpChatBackend(HttpChatConfig{}), BackendUnavailable); }

class LocalServer : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = ++hits_;
      auth_ = req.get_header_value("Authorization");
      if (n <= fail_first_) {
        res.status = fail_status_;
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      const std::string content = "echo: " + body["messages"][0]["content"].get<std::string>();
      nlohmann::json reply{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
      res.set_content(reply.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  HttpChatConfig config() const {
    HttpChatConfig cfg;
    cfg.url = "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    cfg.api_key = "secret";
    cfg.initial_backoff = std::chrono::milliseconds(1);
    return cfg;
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> hits_{0};
  int fail_first_ = 0;
  int fail_status_ = 500;
  std::string auth_;
};

TEST_F(LocalServer, RoundTrip) {
  HttpChatBackend b(config());
  EXPECT_EQ(b.complete("ping"), "echo: ping");
  EXPECT_EQ(auth_, "Bearer secret");
}

TEST_F(LocalServer, RetriesServerErrors) {
  fail_first_ = 2;
  HttpChatBackend b(config());
  EXPECT_EQ(b.complete("x"), "echo: x");
  EXPECT_EQ(hits_.load(), 3);
}

TEST_F(LocalServer, RetriesRateLimit) {
  fail_first_ = 1;
  fail_status_ = 429;
  HttpChatBackend b(config());
  EXPECT_EQ(b.complete("x"), "echo: x");
}

TEST_F(LocalServer, GivesUpAfterMaxAttempts) {
  fail_first_ = 10;
  HttpChatBackend b(config());
  EXPECT_THROW(b.complete("x"), BackendUnavailable);
  EXPECT_EQ(hits_.load(), 3);
}

TEST_F(LocalServer, ClientErrorsAreNotRetried) {
  fail_first_ = 10;
  fail_status_ = 400;
  HttpChatBackend b(config());
  EXPECT_THROW(b.complete("x"), BackendUnavailable);
  EXPECT_EQ(hits_.load(), 1);
}

TEST(HttpChat, ConnectionRefusedIsUnavailable) {
  HttpChatConfig cfg;
  cfg.url = "http://127.0.0.1:1/v1/chat/completions";
  cfg.max_attempts = 2;
  cfg.initial_backoff = std::chrono::milliseconds(1);
  EXPECT_THROW(HttpChatBackend(cfg).complete("x"), BackendUnavailable);
}
