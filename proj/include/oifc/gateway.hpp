#pragma once

// Uniform client for OpenAI-compatible chat-completions endpoints: retries
// with exponential backoff, bounded in-flight concurrency, optional
// token-bucket rate limiting, and a persistent content-addressed response
// cache keyed on the canonical request bytes.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "oifc/errors.hpp"
#include "oifc/sha256.hpp"

namespace oifc::gateway {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config and request/result types
// ---------------------------------------------------------------------------

struct EndpointConfig {
  std::string base_url;                  // e.g. http://127.0.0.1:8080/v1
  std::string api_key_env = "OIFC_API_KEY";  // empty -> no Authorization header
  std::string model_name;
  double timeout_s = 60.0;
  int max_retries = 3;
  double backoff_base_s = 1.0;
  int max_in_flight = 4;
  std::optional<int> requests_per_minute;
};

struct DecodingParams {
  double temperature = 0.0;          // candidate default: greedy
  double repetition_penalty = 1.03;  // candidate default
  int max_new_tokens = 1024;

  friend bool operator==(const DecodingParams&, const DecodingParams&) = default;
};

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  DecodingParams decoding;
  std::string model_name;
};

enum class FinishReason { STOP, LENGTH, ERROR };

inline std::string to_string(FinishReason r) {
  switch (r) {
    case FinishReason::STOP: return "stop";
    case FinishReason::LENGTH: return "length";
    case FinishReason::ERROR: return "error";
  }
  return {};
}

inline FinishReason finish_reason_from_string(const std::string& s) {
  if (s == "length") return FinishReason::LENGTH;
  if (s == "error") return FinishReason::ERROR;
  return FinishReason::STOP;
}

struct ChatResult {
  std::string text;
  FinishReason finish_reason = FinishReason::STOP;
  bool from_cache = false;
  int attempts = 0;  // transport calls made; 0 on cache hit
};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class GatewayError : public Error {
 public:
  using Error::Error;
};

class AuthError : public GatewayError {
 public:
  explicit AuthError(const std::string& msg) : GatewayError("AuthError", msg) {}
};

class ExhaustedRetries : public GatewayError {
 public:
  explicit ExhaustedRetries(const std::string& last_error)
      : GatewayError("ExhaustedRetries", last_error) {}
};

class MalformedEndpointReply : public GatewayError {
 public:
  explicit MalformedEndpointReply(const std::string& msg)
      : GatewayError("MalformedEndpointReply", msg) {}
};

// Connection failure / timeout; always retryable.
class TransportUnavailable : public GatewayError {
 public:
  explicit TransportUnavailable(const std::string& msg)
      : GatewayError("TransportUnavailable", msg) {}
};

// ---------------------------------------------------------------------------
// Canonical serialization and cache key
// ---------------------------------------------------------------------------

// Canonical form covers the model name, every message role+content in order,
// and all decoding fields. nlohmann::json sorts object keys, so the dump is
// stable.
inline nlohmann::json canonical_request_json(const ChatRequest& req) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : req.messages) {
    messages.push_back({{"role", m.role}, {"content", m.content}});
  }
  return nlohmann::json{
      {"model_name", req.model_name},
      {"messages", std::move(messages)},
      {"decoding",
       {{"temperature", req.decoding.temperature},
        {"repetition_penalty", req.decoding.repetition_penalty},
        {"max_new_tokens", req.decoding.max_new_tokens}}}};
}

// 256-bit hex digest over the canonical request bytes.
inline std::string cache_key(const ChatRequest& req) {
  return Sha256::hex(canonical_request_json(req).dump());
}

// ---------------------------------------------------------------------------
// Response cache: one UTF-8 JSON file per digest under a directory, holding
// the canonical request and the reply.
// ---------------------------------------------------------------------------

struct CachedReply {
  std::string text;
  FinishReason finish_reason = FinishReason::STOP;
};

class ResponseCache {
 public:
  explicit ResponseCache(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
  }

  const fs::path& dir() const { return dir_; }

  std::optional<CachedReply> get(const std::string& key) const {
    std::lock_guard<std::mutex> lock(mu_);
    fs::path path = entry_path(key);
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    nlohmann::json j;
    try {
      in >> j;
      CachedReply reply;
      reply.text = j.at("response").at("text").get<std::string>();
      reply.finish_reason = finish_reason_from_string(
          j.at("response").value("finish_reason", "stop"));
      return reply;
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;  // unreadable entry behaves like a miss
    }
  }

  void put(const std::string& key, const nlohmann::json& canonical_request,
           const CachedReply& reply) const {
    std::lock_guard<std::mutex> lock(mu_);
    nlohmann::json j{{"key", key},
                     {"request", canonical_request},
                     {"response",
                      {{"text", reply.text},
                       {"finish_reason", to_string(reply.finish_reason)}}}};
    fs::path final_path = entry_path(key);
    fs::path tmp_path = final_path;
    tmp_path += ".tmp";
    {
      std::ofstream out(tmp_path, std::ios::binary);
      out << j.dump();
    }
    fs::rename(tmp_path, final_path);
  }

 private:
  fs::path entry_path(const std::string& key) const { return dir_ / (key + ".json"); }

  fs::path dir_;
  mutable std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Clock abstraction (virtualizable in tests)
// ---------------------------------------------------------------------------

struct Clock {
  std::function<std::chrono::milliseconds()> now;
  std::function<void(std::chrono::milliseconds)> sleep;
};

inline Clock system_clock() {
  return Clock{
      [] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now().time_since_epoch());
      },
      [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }};
}

// ---------------------------------------------------------------------------
// Transport
// ---------------------------------------------------------------------------

struct HttpReply {
  int status = 0;
  std::string body;
};

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  // POST {base_url}/chat/completions. Throws TransportUnavailable on
  // connection failure/timeout, AuthError if the configured key env var is
  // required but unset.
  virtual HttpReply post_chat_completions(const EndpointConfig& cfg,
                                          const std::string& json_body) = 0;
};

// ---------------------------------------------------------------------------
// Token-bucket rate limiter. Capacity is roughly one second of budget so
// bursts stay small; refill is continuous.
// ---------------------------------------------------------------------------

class RateLimiter {
 public:
  RateLimiter(std::optional<int> requests_per_minute, Clock clock)
      : clock_(std::move(clock)) {
    if (requests_per_minute && *requests_per_minute > 0) {
      rate_per_ms_ = *requests_per_minute / 60000.0;
      capacity_ = std::max(1.0, *requests_per_minute / 60.0);
      tokens_ = capacity_;
      last_ = clock_.now();
    }
  }

  void acquire() {
    if (rate_per_ms_ == 0.0) return;
    while (true) {
      std::chrono::milliseconds wait{0};
      {
        std::lock_guard<std::mutex> lock(mu_);
        refill();
        if (tokens_ >= 1.0) {
          tokens_ -= 1.0;
          return;
        }
        double deficit = 1.0 - tokens_;
        wait = std::chrono::milliseconds(
            static_cast<long long>(std::ceil(deficit / rate_per_ms_)));
      }
      clock_.sleep(wait);
    }
  }

 private:
  void refill() {
    auto now = clock_.now();
    double elapsed_ms = static_cast<double>((now - last_).count());
    if (elapsed_ms > 0) {
      tokens_ = std::min(capacity_, tokens_ + elapsed_ms * rate_per_ms_);
      last_ = now;
    }
  }

  double rate_per_ms_ = 0.0;
  double capacity_ = 0.0;
  double tokens_ = 0.0;
  std::chrono::milliseconds last_{0};
  std::mutex mu_;
  Clock clock_;
};

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

namespace detail {

inline void validate_request(const ChatRequest& req) {
  bool has_user = false;
  std::string prev_role;
  for (std::size_t i = 0; i < req.messages.size(); ++i) {
    const auto& m = req.messages[i];
    if (m.role != "system" && m.role != "user" && m.role != "assistant") {
      throw Error("InvalidChatRequest", "unknown role: " + m.role);
    }
    if (m.role == "system" && i != 0) {
      throw Error("InvalidChatRequest", "system message must come first");
    }
    if ((m.role == "user" || m.role == "assistant") && m.role == prev_role) {
      throw Error("InvalidChatRequest", "user/assistant roles must alternate");
    }
    if (m.role == "user") has_user = true;
    if (m.role != "system") prev_role = m.role;
  }
  if (!has_user) throw Error("InvalidChatRequest", "at least one user message required");
}

}  // namespace detail

// One gateway per endpoint; in-flight and rate limits are enforced here and
// shared by all callers. complete() is safe to invoke from many threads.
class LlmGateway {
 public:
  LlmGateway(EndpointConfig cfg, std::shared_ptr<ChatTransport> transport,
             std::shared_ptr<ResponseCache> cache = nullptr,
             Clock clock = system_clock(), std::uint64_t jitter_seed = 0)
      : cfg_(std::move(cfg)),
        transport_(std::move(transport)),
        cache_(std::move(cache)),
        clock_(std::move(clock)),
        limiter_(cfg_.requests_per_minute, clock_),
        jitter_rng_(jitter_seed) {}

  const EndpointConfig& config() const { return cfg_; }

  ChatResult complete(const ChatRequest& req) {
    detail::validate_request(req);
    const std::string key = cache_key(req);
    if (cache_) {
      if (auto hit = cache_->get(key)) {
        return ChatResult{hit->text, hit->finish_reason, true, 0};
      }
    }

    InFlightGuard guard(*this);
    int attempts = 0;
    int retries_used = 0;
    std::string last_error;
    bool strip_repetition_penalty = false;

    while (true) {
      limiter_.acquire();
      ++attempts;
      HttpReply reply;
      bool transport_down = false;
      try {
        reply = transport_->post_chat_completions(
            cfg_, wire_body(req, strip_repetition_penalty));
      } catch (const TransportUnavailable& ex) {
        transport_down = true;
        last_error = ex.what();
      }

      if (!transport_down) {
        if (reply.status == 401 || reply.status == 403) {
          throw AuthError("endpoint returned HTTP " + std::to_string(reply.status));
        }
        if (reply.status == 400 && !strip_repetition_penalty &&
            reply.body.find("repetition_penalty") != std::string::npos) {
          // Endpoint rejects the field; warn once and resend without it.
          std::cerr << "[oifc] warning: endpoint rejects repetition_penalty; "
                       "stripping it for model "
                    << cfg_.model_name << "\n";
          strip_repetition_penalty = true;
          continue;
        }
        if (reply.status >= 200 && reply.status < 300) {
          ChatResult result = parse_reply(reply.body);
          result.attempts = attempts;
          if (cache_) {
            cache_->put(key, canonical_request_json(req),
                        CachedReply{result.text, result.finish_reason});
          }
          return result;
        }
        last_error = "HTTP " + std::to_string(reply.status) + ": " + reply.body;
        bool retryable = reply.status == 429 || reply.status >= 500;
        if (!retryable) throw ExhaustedRetries(last_error);
      }

      if (retries_used >= cfg_.max_retries) throw ExhaustedRetries(last_error);
      clock_.sleep(backoff_delay(retries_used));
      ++retries_used;
    }
  }

 private:
  class InFlightGuard {
   public:
    explicit InFlightGuard(LlmGateway& gw) : gw_(gw) {
      std::unique_lock<std::mutex> lock(gw_.inflight_mu_);
      gw_.inflight_cv_.wait(lock, [&] { return gw_.inflight_ < gw_.cfg_.max_in_flight; });
      ++gw_.inflight_;
    }
    ~InFlightGuard() {
      {
        std::lock_guard<std::mutex> lock(gw_.inflight_mu_);
        --gw_.inflight_;
      }
      gw_.inflight_cv_.notify_one();
    }

   private:
    LlmGateway& gw_;
  };

  std::string wire_body(const ChatRequest& req, bool strip_repetition_penalty) const {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : req.messages) {
      messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    nlohmann::json body{{"model", req.model_name.empty() ? cfg_.model_name : req.model_name},
                        {"messages", std::move(messages)},
                        {"temperature", req.decoding.temperature},
                        {"max_tokens", req.decoding.max_new_tokens}};
    if (!strip_repetition_penalty) {
      body["repetition_penalty"] = req.decoding.repetition_penalty;
    }
    return body.dump();
  }

  static ChatResult parse_reply(const std::string& body) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& ex) {
      throw MalformedEndpointReply(std::string("reply is not JSON: ") + ex.what());
    }
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
      throw MalformedEndpointReply("reply has no choices");
    }
    const auto& choice = j["choices"][0];
    if (!choice.contains("message") || !choice["message"].contains("content") ||
        !choice["message"]["content"].is_string()) {
      throw MalformedEndpointReply("choices[0].message.content missing");
    }
    ChatResult result;
    result.text = choice["message"]["content"].get<std::string>();
    result.finish_reason =
        finish_reason_from_string(choice.value("finish_reason", "stop"));
    return result;
  }

  std::chrono::milliseconds backoff_delay(int retries_used) {
    double base_ms = cfg_.backoff_base_s * 1000.0 * std::pow(2.0, retries_used);
    double jitter;
    {
      std::lock_guard<std::mutex> lock(jitter_mu_);
      std::uniform_real_distribution<double> dist(0.8, 1.2);
      jitter = dist(jitter_rng_);
    }
    double delay = std::min(base_ms * jitter, 60000.0);
    return std::chrono::milliseconds(static_cast<long long>(delay));
  }

  EndpointConfig cfg_;
  std::shared_ptr<ChatTransport> transport_;
  std::shared_ptr<ResponseCache> cache_;
  Clock clock_;
  RateLimiter limiter_;
  std::mt19937_64 jitter_rng_;
  std::mutex jitter_mu_;
  int inflight_ = 0;
  std::mutex inflight_mu_;
  std::condition_variable inflight_cv_;
};

}  // namespace oifc::gateway
