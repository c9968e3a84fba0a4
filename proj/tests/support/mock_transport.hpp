#pragma once

// Scripted transports and a virtual clock for gateway/pipeline tests.

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <thread>

#include <json.hpp>

#include "oifc/gateway.hpp"

namespace oifc_test {

using oifc::gateway::ChatTransport;
using oifc::gateway::EndpointConfig;
using oifc::gateway::HttpReply;

inline HttpReply ok_reply(const std::string& text, const std::string& finish = "stop") {
  nlohmann::json message{{"role", "assistant"}, {"content", text}};
  nlohmann::json choice{{"message", message}, {"finish_reason", finish}};
  nlohmann::json body{{"choices", nlohmann::json::array({choice})}};
  return HttpReply{200, body.dump()};
}

// Deterministic scripted transport; counts upstream calls and tracks the
// peak number of concurrently outstanding requests.
class MockTransport : public ChatTransport {
 public:
  // handler(request_body, zero-based call index) -> reply
  using Handler = std::function<HttpReply(const nlohmann::json&, int)>;

  explicit MockTransport(Handler handler) : handler_(std::move(handler)) {}

  HttpReply post_chat_completions(const EndpointConfig&, const std::string& body) override {
    int index = calls_.fetch_add(1);
    int current = in_flight_.fetch_add(1) + 1;
    int peak = peak_in_flight_.load();
    while (current > peak && !peak_in_flight_.compare_exchange_weak(peak, current)) {
    }
    if (delay_ms_ > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
    }
    HttpReply reply = handler_(nlohmann::json::parse(body), index);
    in_flight_.fetch_sub(1);
    return reply;
  }

  int calls() const { return calls_.load(); }
  int peak_in_flight() const { return peak_in_flight_.load(); }
  void set_delay_ms(int ms) { delay_ms_ = ms; }

 private:
  Handler handler_;
  std::atomic<int> calls_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_in_flight_{0};
  int delay_ms_ = 0;
};

// Replies with `text` for every request.
inline std::shared_ptr<MockTransport> canned_transport(const std::string& text) {
  return std::make_shared<MockTransport>(
      [text](const nlohmann::json&, int) { return ok_reply(text); });
}

inline std::string last_user_content(const nlohmann::json& body) {
  const auto& messages = body.at("messages");
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if ((*it).at("role") == "user") return (*it).at("content").get<std::string>();
  }
  return {};
}

// Pulls the span between two markers out of a prompt; empty if absent.
inline std::string between(const std::string& haystack, const std::string& after,
                           const std::string& before) {
  std::size_t start = haystack.find(after);
  if (start == std::string::npos) return {};
  start += after.size();
  std::size_t end = haystack.find(before, start);
  if (end == std::string::npos) return haystack.substr(start);
  return haystack.substr(start, end - start);
}

// Deterministic Type 1 generator: derives sections from the i1/r1 embedded
// in the synthesis prompt.
inline std::shared_ptr<MockTransport> scripted_type1_transport() {
  return std::make_shared<MockTransport>([](const nlohmann::json& body, int) {
    std::string prompt = last_user_content(body);
    std::string i1 = between(prompt, "【问题】\n", "\n【回答】");
    std::string r1 = between(prompt, "【回答】\n", "\n\n请完成");
    return ok_reply("【I2】\n与「" + i1 + "」相似的新问题\n【RD】\n关于新问题的详细解答。\n【R2】\n" +
                    (r1.empty() ? std::string("最终回答。") : "仿照原格式：" + r1));
  });
}

// Deterministic Type 2 generator: bulleted list vs one-line sentence.
inline std::shared_ptr<MockTransport> scripted_type2_transport() {
  return std::make_shared<MockTransport>([](const nlohmann::json& body, int) {
    std::string prompt = last_user_content(body);
    std::string i1 = between(prompt, "【问题】\n", "\n\n请完成");
    return ok_reply(
        "【R1A】\n- 要点一：" + i1 + "\n- 要点二\n- 要点三\n"
        "【R1B】\n一句话回答即可。\n"
        "【I2】\n与「" + i1 + "」相似的新问题\n"
        "【R2A】\n- 新要点一\n- 新要点二\n- 新要点三\n"
        "【R2B】\n新问题的一句话回答。");
  });
}

// Virtual clock: sleep() advances time instantly.
class VirtualClock {
 public:
  oifc::gateway::Clock clock() {
    auto state = state_;
    return oifc::gateway::Clock{
        [state] { return std::chrono::milliseconds(state->load()); },
        [state](std::chrono::milliseconds d) { state->fetch_add(d.count()); }};
  }

  long long now_ms() const { return state_->load(); }

 private:
  std::shared_ptr<std::atomic<long long>> state_ =
      std::make_shared<std::atomic<long long>>(0);
};

}  // namespace oifc_test
