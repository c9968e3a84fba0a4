#pragma once

// Run configuration: a sectioned key=value file, environment variables for
// secrets, and flag overrides layered on top by the CLI.
//
// Grammar: one `key = value` per line; `[section]` headers open endpoint or
// mix sections; lines whose first non-blank character is '#' or ';' are
// comments. Values are taken verbatim after trimming.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>

#include "oifc/core.hpp"
#include "oifc/errors.hpp"
#include "oifc/gateway.hpp"
#include "oifc/templates.hpp"
#include "oifc/text.hpp"

namespace oifc::config {

namespace fs = std::filesystem;

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("ConfigError", msg) {}
};

struct RunConfig {
  std::map<std::string, gateway::EndpointConfig> endpoints;  // generator/candidate/judge
  std::optional<fs::path> template_dir;
  fs::path cache_dir = ".oifc_cache";
  std::uint64_t seed = 0;
  std::map<Source, double> mix;  // empty -> no mixing
  std::size_t test_id_size = 994;
  templates::Language judge_language = templates::Language::ZH;
  double reject_threshold = 0.2;   // synthesize exits 1 above this reject ratio
  double scored_threshold = 0.8;   // evaluate exits 1 below this scored ratio
  int concurrency = 4;
  int max_new_tokens = 1024;
  int retry_budget = 2;
  bool multi_turn = false;

  const gateway::EndpointConfig* endpoint(const std::string& name) const {
    auto it = endpoints.find(name);
    return it == endpoints.end() ? nullptr : &it->second;
  }
};

namespace detail {

inline double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("value for '" + key + "' is not a number: " + value);
  }
}

inline long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("value for '" + key + "' is not an integer: " + value);
  }
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("value for '" + key + "' is not a boolean: " + value);
}

inline void apply_endpoint_key(gateway::EndpointConfig& ep, const std::string& key,
                               const std::string& value) {
  if (key == "base_url") {
    ep.base_url = value;
  } else if (key == "model") {
    ep.model_name = value;
  } else if (key == "api_key_env") {
    ep.api_key_env = value == "none" ? "" : value;
  } else if (key == "timeout_s") {
    ep.timeout_s = parse_double(key, value);
    if (ep.timeout_s <= 0) throw ConfigError("timeout_s must be > 0");
  } else if (key == "max_retries") {
    ep.max_retries = static_cast<int>(parse_int(key, value));
    if (ep.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  } else if (key == "backoff_base_s") {
    ep.backoff_base_s = parse_double(key, value);
  } else if (key == "max_in_flight") {
    ep.max_in_flight = static_cast<int>(parse_int(key, value));
    if (ep.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  } else if (key == "requests_per_minute") {
    int rpm = static_cast<int>(parse_int(key, value));
    if (rpm < 1) throw ConfigError("requests_per_minute must be >= 1");
    ep.requests_per_minute = rpm;
  } else {
    throw ConfigError("unknown endpoint key: " + key);
  }
}

inline void apply_top_level_key(RunConfig& cfg, const std::string& key,
                                const std::string& value) {
  if (key == "seed") {
    cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
  } else if (key == "cache_dir") {
    cfg.cache_dir = value;
  } else if (key == "template_dir") {
    cfg.template_dir = value;
  } else if (key == "test_id_size") {
    cfg.test_id_size = static_cast<std::size_t>(parse_int(key, value));
  } else if (key == "judge_language") {
    if (value == "zh") {
      cfg.judge_language = templates::Language::ZH;
    } else if (value == "en") {
      cfg.judge_language = templates::Language::EN;
    } else {
      throw ConfigError("judge_language must be zh or en");
    }
  } else if (key == "reject_threshold") {
    cfg.reject_threshold = parse_double(key, value);
  } else if (key == "scored_threshold") {
    cfg.scored_threshold = parse_double(key, value);
  } else if (key == "concurrency") {
    cfg.concurrency = static_cast<int>(parse_int(key, value));
    if (cfg.concurrency < 1) throw ConfigError("concurrency must be >= 1");
  } else if (key == "max_new_tokens") {
    cfg.max_new_tokens = static_cast<int>(parse_int(key, value));
    if (cfg.max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
  } else if (key == "retry_budget") {
    cfg.retry_budget = static_cast<int>(parse_int(key, value));
    if (cfg.retry_budget < 0) throw ConfigError("retry_budget must be >= 0");
  } else if (key == "multi_turn") {
    cfg.multi_turn = parse_bool(key, value);
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in, const std::string& origin) {
  RunConfig cfg;
  std::string section;  // "", "endpoint.<name>" or "mix"
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = text::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": unterminated section header");
      }
      section = text::trim(t.substr(1, t.size() - 2));
      if (section != "mix" && section.rfind("endpoint.", 0) != 0) {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown section [" + section + "]");
      }
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = text::trim(t.substr(0, eq));
    std::string value = text::trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    }
    try {
      if (section.empty()) {
        detail::apply_top_level_key(cfg, key, value);
      } else if (section == "mix") {
        double w = detail::parse_double(key, value);
        if (w <= 0) throw ConfigError("mix weights must be positive");
        cfg.mix[source_from_string(key)] = w;
      } else {
        detail::apply_endpoint_key(cfg.endpoints[section.substr(9)], key, value);
      }
    } catch (const ConfigError& ex) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return cfg;
}

inline RunConfig load_config_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  return parse_config(in, path.string());
}

}  // namespace oifc::config
