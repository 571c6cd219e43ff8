#pragma once

/// Uniform interface to a chat-completion backend: request/response types,
/// validation, retry with jittered exponential backoff, exchange recording,
/// and two deterministic test backends (scripted, replay).
///
/// The live HTTP backend lives in http_backend.hpp to keep this header light.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

namespace tradertalk::llm {

// --- Messages ----------------------------------------------------------------

enum class Role { System, User, Assistant };

[[nodiscard]] inline std::string to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  throw std::logic_error("unknown Role");
}

[[nodiscard]] inline Role role_from_string(const std::string& s) {
  if (s == "system") return Role::System;
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  throw std::invalid_argument("not a Role: " + s);
}

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct LlmRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 1.0;
  int max_tokens = 1024;

  friend bool operator==(const LlmRequest&, const LlmRequest&) = default;
};

/// One fully recorded request/response pair.
struct LlmExchange {
  LlmRequest request;
  std::string response_text;
  std::chrono::milliseconds latency{0};
  int attempt_count = 1;

  friend bool operator==(const LlmExchange&, const LlmExchange&) = default;
};

inline void to_json(nlohmann::json& j, const ChatMessage& m) {
  j = nlohmann::json{{"role", to_string(m.role)}, {"content", m.content}};
}

inline void from_json(const nlohmann::json& j, ChatMessage& m) {
  m.role = role_from_string(j.at("role").get<std::string>());
  j.at("content").get_to(m.content);
}

inline void to_json(nlohmann::json& j, const LlmRequest& r) {
  j = nlohmann::json{{"model", r.model_id},
                     {"messages", r.messages},
                     {"temperature", r.temperature},
                     {"max_tokens", r.max_tokens}};
}

inline void from_json(const nlohmann::json& j, LlmRequest& r) {
  j.at("model").get_to(r.model_id);
  r.messages = j.at("messages").get<std::vector<ChatMessage>>();
  j.at("temperature").get_to(r.temperature);
  j.at("max_tokens").get_to(r.max_tokens);
}

inline void to_json(nlohmann::json& j, const LlmExchange& e) {
  j = nlohmann::json{{"request", e.request},
                     {"response_text", e.response_text},
                     {"latency_ms", e.latency.count()},
                     {"attempt_count", e.attempt_count}};
}

inline void from_json(const nlohmann::json& j, LlmExchange& e) {
  j.at("request").get_to(e.request);
  e.response_text = j.at("response_text").get<std::string>();
  e.latency = std::chrono::milliseconds{j.at("latency_ms").get<std::int64_t>()};
  j.at("attempt_count").get_to(e.attempt_count);
}

// --- Errors -------------------------------------------------------------------

struct GatewayError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Network-level failure (connection refused, 5xx) — retriable.
struct TransportError : GatewayError {
  using GatewayError::GatewayError;
};

/// Backend throttling (HTTP 429) — retriable.
struct RateLimited : GatewayError {
  using GatewayError::GatewayError;
};

/// Response carries no usable assistant message — never retried.
struct MalformedResponse : GatewayError {
  using GatewayError::GatewayError;
};

/// Request violates the LlmRequest invariants; raised before any attempt.
struct InvalidRequest : GatewayError {
  using GatewayError::GatewayError;
};

/// Missing or unusable backend configuration (e.g. no API key).
struct ConfigError : GatewayError {
  using GatewayError::GatewayError;
};

/// Replayed request sequence departs from the recorded log.
struct ReplayDivergence : GatewayError {
  std::size_t index;
  explicit ReplayDivergence(std::size_t i)
      : GatewayError("replay diverged at call index " + std::to_string(i)), index(i) {}
};

// --- Prompt fingerprint ---------------------------------------------------------

/// Stable 64-bit FNV-1a hash over the rendering "<role>:<content>\n" per
/// message, in order. Whitespace-sensitive by design: any change to the
/// rendered prompt text intentionally invalidates recorded scripts.
[[nodiscard]] inline std::uint64_t fingerprint(const std::vector<ChatMessage>& messages) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& m : messages) {
    mix(to_string(m.role));
    mix(":");
    mix(m.content);
    mix("\n");
  }
  return h;
}

[[nodiscard]] inline std::uint64_t fingerprint(const LlmRequest& request) {
  return fingerprint(request.messages);
}

[[nodiscard]] inline std::string fingerprint_hex(std::uint64_t fp) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[fp & 0xf];
    fp >>= 4;
  }
  return out;
}

[[nodiscard]] inline std::uint64_t fingerprint_from_hex(const std::string& hex) {
  if (hex.empty() || hex.size() > 16) throw std::invalid_argument("bad fingerprint hex: " + hex);
  std::uint64_t fp = 0;
  for (char c : hex) {
    fp <<= 4;
    if (c >= '0' && c <= '9') fp |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f') fp |= static_cast<std::uint64_t>(c - 'a' + 10);
    else if (c >= 'A' && c <= 'F') fp |= static_cast<std::uint64_t>(c - 'A' + 10);
    else throw std::invalid_argument("bad fingerprint hex: " + hex);
  }
  return fp;
}

// --- Recorder -------------------------------------------------------------------

/// Position of one completion call within a batch: which simulation run it
/// belongs to and the 0-based ordinal of the call within that run. Scripted
/// response selection and replay scoping key off this, which keeps both
/// correct when many runs execute concurrently.
struct CallContext {
  int run_index = 0;
  int call_index = 0;
};

struct RecordedExchange {
  LlmExchange exchange;
  int run_index = 0;
  int call_index = 0;

  friend bool operator==(const RecordedExchange&, const RecordedExchange&) = default;
};

/// Thread-safe append-only log of successful exchanges.
class ExchangeRecorder {
 public:
  void append(RecordedExchange rec) {
    std::lock_guard lock(mutex_);
    records_.push_back(std::move(rec));
  }

  [[nodiscard]] std::size_t size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
  }

  [[nodiscard]] std::vector<RecordedExchange> snapshot() const {
    std::lock_guard lock(mutex_);
    return records_;
  }

  void clear() {
    std::lock_guard lock(mutex_);
    records_.clear();
  }

 private:
  mutable std::mutex mutex_;
  std::vector<RecordedExchange> records_;
};

// --- Backend base -----------------------------------------------------------------

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{1000};
};

/// Base class for all backends. `complete` validates the request, drives the
/// retry loop (exponential backoff, doubling, full jitter; TransportError and
/// RateLimited are retried, MalformedResponse never is) and records every
/// successful exchange.
class LlmBackend {
 public:
  explicit LlmBackend(RetryPolicy retry = {}, std::uint64_t jitter_seed = 0)
      : retry_(retry), rng_(jitter_seed) {}
  virtual ~LlmBackend() = default;

  LlmBackend(const LlmBackend&) = delete;
  LlmBackend& operator=(const LlmBackend&) = delete;

  std::string complete(const LlmRequest& request, const CallContext& context = {}) {
    validate(request);
    for (int attempt = 1;; ++attempt) {
      const auto start = std::chrono::steady_clock::now();
      try {
        std::string text = complete_once(request, context);
        const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - start);
        recorder_.append({LlmExchange{request, text, latency, attempt},
                          context.run_index, context.call_index});
        return text;
      } catch (const MalformedResponse&) {
        throw;  // non-transient: never retried
      } catch (const ReplayDivergence&) {
        throw;  // deterministic mismatch: retrying cannot help
      } catch (const TransportError&) {
        if (attempt > retry_.max_retries) throw;
      } catch (const RateLimited&) {
        if (attempt > retry_.max_retries) throw;
      }
      std::this_thread::sleep_for(backoff_delay(attempt));
    }
  }

  [[nodiscard]] ExchangeRecorder& recorder() { return recorder_; }
  [[nodiscard]] const ExchangeRecorder& recorder() const { return recorder_; }
  [[nodiscard]] const RetryPolicy& retry_policy() const { return retry_; }

 protected:
  /// One transport attempt; throw TransportError / RateLimited / MalformedResponse.
  virtual std::string complete_once(const LlmRequest& request, const CallContext& context) = 0;

 private:
  static void validate(const LlmRequest& request) {
    if (request.messages.empty()) throw InvalidRequest("request has no messages");
    for (const auto& m : request.messages) {
      if ((m.role == Role::System || m.role == Role::User) && m.content.empty())
        throw InvalidRequest("system/user message with empty content");
    }
    if (request.temperature < 0.0 || request.temperature > 2.0)
      throw InvalidRequest("temperature outside [0, 2]");
    if (request.max_tokens <= 0) throw InvalidRequest("max_tokens must be positive");
  }

  /// Full jitter: uniform in [0, initial_backoff * 2^(attempt-1)].
  [[nodiscard]] std::chrono::milliseconds backoff_delay(int attempt) {
    const auto cap = retry_.initial_backoff.count() * (std::int64_t{1} << (attempt - 1));
    if (cap <= 0) return std::chrono::milliseconds{0};
    std::lock_guard lock(rng_mutex_);
    std::uniform_int_distribution<std::int64_t> dist(0, cap);
    return std::chrono::milliseconds{dist(rng_)};
  }

  RetryPolicy retry_;
  ExchangeRecorder recorder_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
};

// --- Scripted backend ----------------------------------------------------------------

/// Deterministic backend for tests and reproducible batches. Responses are
/// keyed by prompt fingerprint; each key holds a response list indexed by
/// run_index modulo list length, so one script can drive an n-run batch to an
/// exact outcome mix. Fallbacks, in order: per-fingerprint entry, run-indexed
/// default_responses list, single default string; otherwise MalformedResponse.
class ScriptedBackend final : public LlmBackend {
 public:
  ScriptedBackend() : LlmBackend(RetryPolicy{3, std::chrono::milliseconds{0}}) {}

  void add_response(std::uint64_t fp, std::string text) {
    std::lock_guard lock(mutex_);
    entries_[fp].push_back(std::move(text));
  }

  void add_response(const LlmRequest& request, std::string text) {
    add_response(fingerprint(request), std::move(text));
  }

  void set_default(std::string text) {
    std::lock_guard lock(mutex_);
    default_ = std::move(text);
  }

  void set_default_responses(std::vector<std::string> responses) {
    std::lock_guard lock(mutex_);
    default_responses_ = std::move(responses);
  }

  /// Script file shape:
  ///   {"version": 1,
  ///    "default": str?,                 // any-prompt fallback string
  ///    "default_responses": [str]?,     // any-prompt fallback, run-indexed
  ///    "entries": [{                    // per-prompt entries
  ///        "fingerprint": hex-str       //   exact fingerprint, or
  ///      | "messages": [{role,content}] //   full message list, or
  ///      | "prompt": str,               //   shorthand: one user message
  ///        "response": str | "responses": [str]}]?}
  static std::unique_ptr<ScriptedBackend> from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open script file: " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad script file " + path.string() + ": " + e.what());
    }
    auto backend = std::make_unique<ScriptedBackend>();
    if (j.contains("default")) backend->set_default(j.at("default").get<std::string>());
    if (j.contains("default_responses"))
      backend->set_default_responses(j.at("default_responses").get<std::vector<std::string>>());
    if (j.contains("entries")) {
      for (const auto& e : j.at("entries")) {
        std::uint64_t fp = 0;
        if (e.contains("fingerprint")) {
          fp = fingerprint_from_hex(e.at("fingerprint").get<std::string>());
        } else if (e.contains("messages")) {
          fp = fingerprint(e.at("messages").get<std::vector<ChatMessage>>());
        } else if (e.contains("prompt")) {
          fp = fingerprint({ChatMessage{Role::User, e.at("prompt").get<std::string>()}});
        } else {
          throw ConfigError("script entry needs 'fingerprint', 'messages' or 'prompt'");
        }
        if (e.contains("responses")) {
          for (const auto& r : e.at("responses")) backend->add_response(fp, r.get<std::string>());
        } else if (e.contains("response")) {
          backend->add_response(fp, e.at("response").get<std::string>());
        } else {
          throw ConfigError("script entry needs 'response' or 'responses'");
        }
      }
    }
    return backend;
  }

 protected:
  std::string complete_once(const LlmRequest& request, const CallContext& context) override {
    const std::uint64_t fp = fingerprint(request);
    std::lock_guard lock(mutex_);
    if (auto it = entries_.find(fp); it != entries_.end() && !it->second.empty()) {
      return it->second[static_cast<std::size_t>(context.run_index) % it->second.size()];
    }
    if (!default_responses_.empty()) {
      return default_responses_[static_cast<std::size_t>(context.run_index) %
                                default_responses_.size()];
    }
    if (default_) return *default_;
    throw MalformedResponse("no scripted response for prompt fingerprint " + fingerprint_hex(fp));
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::uint64_t, std::vector<std::string>> entries_;
  std::vector<std::string> default_responses_;
  std::optional<std::string> default_;
};

// --- Replay backend -----------------------------------------------------------------

/// Replays a previously recorded exchange log. Calls are grouped by run_index
/// and served in call order within each run; a prompt whose fingerprint does
/// not match the recorded one at the same position raises ReplayDivergence
/// carrying the within-run call ordinal.
class ReplayBackend final : public LlmBackend {
 public:
  explicit ReplayBackend(const std::filesystem::path& log_path) : LlmBackend() {
    std::ifstream in(log_path);
    if (!in) throw ConfigError("cannot open replay log: " + log_path.string());
    std::string line;
    int position = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad replay log line: " + std::string(e.what()));
      }
      Step step;
      if (j.contains("request_fingerprint")) {
        step.fp = fingerprint_from_hex(j.at("request_fingerprint").get<std::string>());
      } else {
        LlmRequest req = j.at("request").get<LlmRequest>();
        step.fp = fingerprint(req);
      }
      step.text = j.at("response_text").get<std::string>();
      const int run = j.value("run_index", 0);
      const int call = j.value("call_index", position);
      runs_[run].push_back({call, step});
      ++position;
    }
    for (auto& [run, steps] : runs_) {
      std::sort(steps.begin(), steps.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
    }
  }

 protected:
  std::string complete_once(const LlmRequest& request, const CallContext& context) override {
    std::lock_guard lock(mutex_);
    auto& cursor = cursors_[context.run_index];
    const auto it = runs_.find(context.run_index);
    if (it == runs_.end() || cursor >= it->second.size()) throw ReplayDivergence(cursor);
    const Step& step = it->second[cursor].second;
    if (step.fp != fingerprint(request)) throw ReplayDivergence(cursor);
    ++cursor;
    return step.text;
  }

 private:
  struct Step {
    std::uint64_t fp = 0;
    std::string text;
  };
  std::mutex mutex_;
  std::map<int, std::vector<std::pair<int, Step>>> runs_;
  std::map<int, std::size_t> cursors_;
};

// --- JSON serialization (batch-scoped records) -------------------------------------------

inline void to_json(nlohmann::json& j, const RecordedExchange& r) {
  j = nlohmann::json(r.exchange);
  j["run_index"] = r.run_index;
  j["call_index"] = r.call_index;
}

inline void from_json(const nlohmann::json& j, RecordedExchange& r) {
  j.get_to(r.exchange);
  r.run_index = j.value("run_index", 0);
  r.call_index = j.value("call_index", 0);
}

}  // namespace tradertalk::llm
