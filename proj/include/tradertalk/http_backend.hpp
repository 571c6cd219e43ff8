#pragma once

/// Live chat-completion backend speaking the standard wire protocol:
/// POST {base_url}/v1/chat/completions with body fields `model`, `messages`,
/// `temperature`, `max_tokens` and bearer-token auth. Kept out of gateway.hpp
/// so only translation units that actually talk to the network pay for the
/// HTTP client include.

#include <chrono>
#include <cstdlib>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "tradertalk/gateway.hpp"

namespace tradertalk::llm {

/// Shared token-bucket limiter: `requests_per_minute` capacity, continuous
/// refill. acquire() blocks until a token is available. A non-positive rate
/// disables limiting.
class TokenBucket {
 public:
  explicit TokenBucket(int requests_per_minute)
      : rate_per_second_(requests_per_minute / 60.0),
        capacity_(static_cast<double>(requests_per_minute)),
        tokens_(static_cast<double>(requests_per_minute)),
        last_refill_(std::chrono::steady_clock::now()) {}

  void acquire() {
    if (capacity_ <= 0.0) return;
    for (;;) {
      std::chrono::duration<double> wait{0};
      {
        std::lock_guard lock(mutex_);
        refill();
        if (tokens_ >= 1.0) {
          tokens_ -= 1.0;
          return;
        }
        wait = std::chrono::duration<double>((1.0 - tokens_) / rate_per_second_);
      }
      std::this_thread::sleep_for(wait);
    }
  }

 private:
  void refill() {
    const auto now = std::chrono::steady_clock::now();
    const std::chrono::duration<double> elapsed = now - last_refill_;
    tokens_ = std::min(capacity_, tokens_ + elapsed.count() * rate_per_second_);
    last_refill_ = now;
  }

  std::mutex mutex_;
  double rate_per_second_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_refill_;
};

struct HttpConfig {
  std::string base_url;  // scheme://host[:port]
  std::string api_key;
  std::string path = "/v1/chat/completions";
  int requests_per_minute = 60;
  std::chrono::seconds timeout{60};
};

/// Reads TRADERTALK_API_BASE / TRADERTALK_API_KEY. Missing key → ConfigError,
/// raised before any request is attempted.
[[nodiscard]] inline HttpConfig http_config_from_env() {
  HttpConfig cfg;
  const char* base = std::getenv("TRADERTALK_API_BASE");
  cfg.base_url = (base != nullptr && *base != '\0') ? base : "https://api.openai.com";
  const char* key = std::getenv("TRADERTALK_API_KEY");
  if (key == nullptr || *key == '\0')
    throw ConfigError("live backend requires TRADERTALK_API_KEY to be set");
  cfg.api_key = key;
  return cfg;
}

class HttpBackend final : public LlmBackend {
 public:
  explicit HttpBackend(HttpConfig config, RetryPolicy retry = {}, std::uint64_t jitter_seed = 0)
      : LlmBackend(retry, jitter_seed),
        config_(std::move(config)),
        bucket_(config_.requests_per_minute) {
    if (config_.api_key.empty()) throw ConfigError("HttpBackend configured without an API key");
    if (config_.base_url.empty()) throw ConfigError("HttpBackend configured without a base URL");
  }

 protected:
  std::string complete_once(const LlmRequest& request, const CallContext&) override {
    bucket_.acquire();

    const nlohmann::json body = request;  // exactly: model, messages, temperature, max_tokens

    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    client.set_bearer_token_auth(config_.api_key);

    auto res = client.Post(config_.path, body.dump(), "application/json");
    if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
    if (res->status == 429) throw RateLimited("backend throttled (HTTP 429)");
    if (res->status >= 500)
      throw TransportError("server error (HTTP " + std::to_string(res->status) + ")");
    if (res->status < 200 || res->status >= 300)
      throw MalformedResponse("unexpected HTTP status " + std::to_string(res->status));

    try {
      const auto j = nlohmann::json::parse(res->body);
      const auto& choices = j.at("choices");
      if (!choices.is_array() || choices.empty())
        throw MalformedResponse("response has no choices");
      const auto& message = choices.at(0).at("message");
      if (message.at("role").get<std::string>() != "assistant")
        throw MalformedResponse("first choice is not an assistant message");
      return message.at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw MalformedResponse(std::string{"response lacks an assistant message: "} + e.what());
    }
  }

 private:
  HttpConfig config_;
  TokenBucket bucket_;
};

}  // namespace tradertalk::llm
