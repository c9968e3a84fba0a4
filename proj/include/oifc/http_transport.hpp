#pragma once

// Real HTTP transport for the gateway, built on cpp-httplib. Kept out of
// gateway.hpp so tests with mock transports do not pull in sockets.

#include <chrono>
#include <cstdlib>
#include <string>

#include <httplib.h>

#include "oifc/gateway.hpp"

namespace oifc::gateway {

class HttplibTransport : public ChatTransport {
 public:
  HttpReply post_chat_completions(const EndpointConfig& cfg,
                                  const std::string& json_body) override {
    std::string origin;
    std::string prefix;
    split_url(cfg.base_url, origin, prefix);

    httplib::Client client(origin);
    auto timeout = std::chrono::milliseconds(
        static_cast<long long>(cfg.timeout_s * 1000.0));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers headers;
    if (!cfg.api_key_env.empty()) {
      const char* key = std::getenv(cfg.api_key_env.c_str());
      if (!key || !*key) {
        throw AuthError("API key environment variable not set: " + cfg.api_key_env);
      }
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    auto res = client.Post(prefix + "/chat/completions", headers, json_body,
                           "application/json");
    if (!res) {
      throw TransportUnavailable("HTTP transport error: " +
                                 httplib::to_string(res.error()));
    }
    return HttpReply{res->status, res->body};
  }

 private:
  // Splits "http://host:port/v1" into origin "http://host:port" and path
  // prefix "/v1".
  static void split_url(const std::string& base_url, std::string& origin,
                        std::string& prefix) {
    std::size_t scheme_end = base_url.find("://");
    std::size_t path_start = scheme_end == std::string::npos
                                 ? base_url.find('/')
                                 : base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      origin = base_url;
      prefix.clear();
    } else {
      origin = base_url.substr(0, path_start);
      prefix = base_url.substr(path_start);
      while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    }
  }
};

}  // namespace oifc::gateway
