#pragma once

// Evaluation protocol: generate candidate responses under one-shot format
// prompts, score them with an LLM judge on helpfulness and format
// correctness (both in [0,1]), and aggregate per-split reports.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "oifc/core.hpp"
#include "oifc/errors.hpp"
#include "oifc/gateway.hpp"
#include "oifc/jsonl.hpp"
#include "oifc/parallel.hpp"
#include "oifc/templates.hpp"

namespace oifc::benchmark {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

struct JudgeScore {
  double helpfulness = 0.0;         // [0,1] after clamping
  double format_correctness = 0.0;  // [0,1] after clamping
  std::string raw_judge_text;
  bool clamped = false;
};

enum class EvalFailure { GENERATION_FAILED, JUDGE_FAILED, UNPARSEABLE };

inline std::string to_string(EvalFailure f) {
  switch (f) {
    case EvalFailure::GENERATION_FAILED: return "generation_failed";
    case EvalFailure::JUDGE_FAILED: return "judge_failed";
    case EvalFailure::UNPARSEABLE: return "unparseable";
  }
  return {};
}

// Exactly one of score/failure is set once a record has been processed.
struct EvalRecord {
  OifcSample sample;
  std::string candidate_response;
  std::optional<JudgeScore> score;
  std::optional<EvalFailure> failure;
};

struct SplitReport {
  std::size_t n_scored = 0;
  std::size_t n_failed = 0;
  std::optional<double> mean_helpfulness;
  std::optional<double> mean_format;
};

struct EvalReport {
  std::map<Split, SplitReport> per_split;
  std::size_t clamp_count = 0;
  std::string model_name;
  std::string timestamp;
};

class Unparseable : public Error {
 public:
  explicit Unparseable(const std::string& msg) : Error("Unparseable", msg) {}
};

class NotANumber : public Error {
 public:
  explicit NotANumber(const std::string& msg) : Error("NotANumber", msg) {}
};

// ---------------------------------------------------------------------------
// Judge-score parsing
// ---------------------------------------------------------------------------

struct ParsedScores {
  double helpfulness = 0.0;
  double format_correctness = 0.0;
  bool clamped = false;
};

namespace detail {

// Last balanced top-level {...} span in the reply, or npos pair.
inline std::pair<std::size_t, std::size_t> last_balanced_object(std::string_view s) {
  std::size_t best_begin = std::string_view::npos;
  std::size_t best_end = std::string_view::npos;
  int depth = 0;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '{') {
      if (depth == 0) begin = i;
      ++depth;
    } else if (s[i] == '}') {
      if (depth > 0 && --depth == 0) {
        best_begin = begin;
        best_end = i + 1;
      }
    }
  }
  return {best_begin, best_end};
}

// Finds `alias` used as a key (followed by an optional closing quote,
// whitespace, then ':') and returns the position just after the colon.
inline std::size_t find_key_value_pos(std::string_view object, std::string_view alias) {
  std::size_t pos = 0;
  while ((pos = object.find(alias, pos)) != std::string_view::npos) {
    std::size_t p = pos + alias.size();
    if (p < object.size() && (object[p] == '\'' || object[p] == '"')) ++p;
    while (p < object.size() && text::is_ascii_space(object[p])) ++p;
    if (p < object.size() && object[p] == ':') return p + 1;
    pos += alias.size();
  }
  return std::string_view::npos;
}

inline double parse_score_value(std::string_view object, std::size_t value_pos,
                                const char* metric) {
  std::size_t p = value_pos;
  while (p < object.size() &&
         (text::is_ascii_space(object[p]) || object[p] == '\'' || object[p] == '"')) {
    ++p;
  }
  std::size_t start = p;
  if (p < object.size() && (object[p] == '+' || object[p] == '-')) ++p;
  while (p < object.size() && object[p] >= '0' && object[p] <= '9') ++p;
  if (p < object.size() && object[p] == '.') {
    ++p;
    while (p < object.size() && object[p] >= '0' && object[p] <= '9') ++p;
  }
  std::string token(object.substr(start, p - start));
  if (token.empty() || token == "+" || token == "-" || token == ".") {
    throw NotANumber(std::string(metric) + " value is not a decimal number");
  }
  return std::strtod(token.c_str(), nullptr);
}

// Scores just outside [0,1] are treated as sloppy-judge output and clamped;
// anything further out (e.g. a bare "85" percentage) is rejected rather than
// unit-guessed.
inline constexpr double kClampWindowLow = -0.5;
inline constexpr double kClampWindowHigh = 1.5;

inline double clamp_score(double v, const char* metric, bool& clamped) {
  if (v < kClampWindowLow || v > kClampWindowHigh) {
    throw Unparseable(std::string(metric) + " score " + std::to_string(v) +
                      " is outside the plausible [0,1] range");
  }
  if (v < 0.0) {
    clamped = true;
    return 0.0;
  }
  if (v > 1.0) {
    clamped = true;
    return 1.0;
  }
  return v;
}

}  // namespace detail

// Parses the two scores from a judge reply: takes the LAST balanced
// brace-delimited object, accepts Chinese or English key aliases and single
// or double quotes, and clamps near-miss values into [0,1].
inline ParsedScores parse_judge_scores(std::string_view reply) {
  auto [begin, end] = detail::last_balanced_object(reply);
  if (begin == std::string_view::npos) {
    throw Unparseable("no balanced {...} object in judge reply");
  }
  std::string_view object = reply.substr(begin, end - begin);

  static constexpr std::string_view kHelpfulnessAliases[] = {"Helpfulness",
                                                             "回答的正确性"};
  static constexpr std::string_view kFormatAliases[] = {"Format Correctness",
                                                        "回答的格式规范"};
  auto locate = [&](const auto& aliases, const char* metric) {
    for (std::string_view alias : aliases) {
      std::size_t pos = detail::find_key_value_pos(object, alias);
      if (pos != std::string_view::npos) return pos;
    }
    throw Unparseable(std::string(metric) + " key not found in judge reply");
  };

  std::size_t help_pos = locate(kHelpfulnessAliases, "helpfulness");
  std::size_t format_pos = locate(kFormatAliases, "format correctness");

  ParsedScores scores;
  double h = detail::parse_score_value(object, help_pos, "helpfulness");
  double f = detail::parse_score_value(object, format_pos, "format correctness");
  scores.helpfulness = detail::clamp_score(h, "helpfulness", scores.clamped);
  scores.format_correctness = detail::clamp_score(f, "format correctness", scores.clamped);
  return scores;
}

// ---------------------------------------------------------------------------
// Judge prompt
// ---------------------------------------------------------------------------

// Serializes the four record fields into the json-shaped slot of the judge
// template. Values are inserted verbatim (no escaping): the embedded texts
// are the ground truth for implicit format and must stay byte-identical.
inline std::string build_judge_prompt(const EvalRecord& record,
                                      const templates::TemplateRegistry& registry,
                                      const std::string& judge_template_id = "judge_zh") {
  if (record.candidate_response.empty()) {
    throw templates::UnboundVariable("model_answer");
  }
  const auto& sample = record.sample;
  bool zh = registry.get(judge_template_id).language == templates::Language::ZH;

  std::string payload = "{";
  auto field = [&](const char* key, const std::string& value, bool last = false) {
    payload += "\"";
    payload += key;
    payload += "\": \"";
    payload += value;
    payload += last ? "\"" : "\", ";
  };
  field(zh ? "问题" : "question", sample.query);
  payload += zh ? "\"one-shot样例\": {" : "\"one_shot_example\": {";
  if (sample.one_shot_query) {
    field(zh ? "示例问题" : "question", *sample.one_shot_query);
  }
  field(zh ? "示例回答" : "answer", sample.one_shot_response, true);
  payload += "}, ";
  field(zh ? "标准答案" : "reference_answer", sample.gold_response);
  field(zh ? "模型答案" : "model_answer", record.candidate_response, true);
  payload += "}";

  return templates::render(registry, judge_template_id, {{"record_json", payload}});
}

// ---------------------------------------------------------------------------
// Candidate generation
// ---------------------------------------------------------------------------

// Assembles the one-shot format prompt as the sole user message and queries
// the candidate endpoint with greedy decoding and repetition penalty 1.03.
inline std::string generate_candidate(const OifcSample& sample,
                                      gateway::LlmGateway& candidate,
                                      const templates::TemplateRegistry& registry,
                                      const std::string& template_id = "oifc_zh",
                                      int max_new_tokens = 1024) {
  gateway::ChatRequest req;
  req.messages = {{"user", assemble_oifc_prompt(sample, template_id, registry)}};
  req.decoding = gateway::DecodingParams{};  // temperature 0, repetition_penalty 1.03
  req.decoding.max_new_tokens = max_new_tokens;
  req.model_name = candidate.config().model_name;
  return candidate.complete(req).text;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

// Arithmetic mean per split over scored records. Values are sorted before
// summation so any permutation of the input yields the same report bits.
// Rounding to two decimals happens only at presentation.
inline EvalReport aggregate(const std::vector<EvalRecord>& records) {
  EvalReport report;
  std::map<Split, std::vector<double>> helpfulness;
  std::map<Split, std::vector<double>> format;
  for (const auto& r : records) {
    auto& split_report = report.per_split[r.sample.split];
    if (r.score) {
      ++split_report.n_scored;
      helpfulness[r.sample.split].push_back(r.score->helpfulness);
      format[r.sample.split].push_back(r.score->format_correctness);
      if (r.score->clamped) ++report.clamp_count;
    } else {
      ++split_report.n_failed;
    }
  }
  auto sorted_mean = [](std::vector<double>& v) -> std::optional<double> {
    if (v.empty()) return std::nullopt;
    std::sort(v.begin(), v.end());
    long double sum = 0.0L;
    for (double x : v) sum += x;
    return static_cast<double>(sum / static_cast<long double>(v.size()));
  };
  for (auto& [split, values] : helpfulness) {
    report.per_split[split].mean_helpfulness = sorted_mean(values);
  }
  for (auto& [split, values] : format) {
    report.per_split[split].mean_format = sorted_mean(values);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Benchmark runner: two sequential phases (generate, judge), each on the
// gateway's bounded pool.
// ---------------------------------------------------------------------------

struct BenchmarkOptions {
  std::string candidate_template_id = "oifc_zh";
  std::string judge_template_id = "judge_zh";
  int judge_reasks = 2;  // corrective re-asks before marking UNPARSEABLE
  int concurrency = 4;
  int candidate_max_new_tokens = 1024;
  int judge_max_new_tokens = 1024;
};

namespace detail {

inline void judge_record(EvalRecord& record, gateway::LlmGateway& judge,
                         const templates::TemplateRegistry& registry,
                         const BenchmarkOptions& options) {
  std::string prompt = build_judge_prompt(record, registry, options.judge_template_id);
  bool zh = registry.get(options.judge_template_id).language == templates::Language::ZH;
  const std::string retry_template = zh ? "judge_retry_zh" : "judge_retry_en";

  std::vector<gateway::ChatMessage> messages{{"user", prompt}};
  for (int ask = 0;; ++ask) {
    std::string reply;
    try {
      gateway::ChatRequest req;
      req.messages = messages;
      req.decoding = gateway::DecodingParams{0.0, 1.0, options.judge_max_new_tokens};
      req.model_name = judge.config().model_name;
      reply = judge.complete(req).text;
    } catch (const gateway::AuthError&) {
      throw;
    } catch (const gateway::GatewayError&) {
      record.failure = EvalFailure::JUDGE_FAILED;
      return;
    }
    try {
      ParsedScores parsed = parse_judge_scores(reply);
      record.score = JudgeScore{parsed.helpfulness, parsed.format_correctness, reply,
                                parsed.clamped};
      return;
    } catch (const Error&) {
      if (ask >= options.judge_reasks) {
        record.failure = EvalFailure::UNPARSEABLE;
        return;
      }
      messages.push_back({"assistant", reply});
      messages.push_back({"user", templates::render(registry, retry_template, {})});
    }
  }
}

}  // namespace detail

inline std::vector<EvalRecord> run_benchmark(const std::vector<OifcSample>& samples,
                                             gateway::LlmGateway& candidate,
                                             gateway::LlmGateway& judge,
                                             const templates::TemplateRegistry& registry,
                                             const BenchmarkOptions& options = {}) {
  std::vector<EvalRecord> records(samples.size());

  parallel_for_index(samples.size(), options.concurrency, [&](std::size_t i) {
    records[i].sample = samples[i];
    try {
      records[i].candidate_response =
          generate_candidate(samples[i], candidate, registry,
                             options.candidate_template_id,
                             options.candidate_max_new_tokens);
    } catch (const gateway::AuthError&) {
      throw;
    } catch (const gateway::GatewayError&) {
      records[i].failure = EvalFailure::GENERATION_FAILED;
    }
  });

  parallel_for_index(samples.size(), options.concurrency, [&](std::size_t i) {
    if (records[i].failure) return;
    detail::judge_record(records[i], judge, registry, options);
  });

  return records;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json record_to_json(const EvalRecord& r) {
  nlohmann::ordered_json j;
  j["sample"] = jsonl::to_json(r.sample);
  j["candidate_response"] = r.candidate_response;
  if (r.score) {
    j["score"] = nlohmann::ordered_json{
        {"helpfulness", r.score->helpfulness},
        {"format_correctness", r.score->format_correctness},
        {"clamped", r.score->clamped},
        {"raw_judge_text", r.score->raw_judge_text}};
  } else {
    j["score"] = nullptr;
  }
  j["failure"] = r.failure ? nlohmann::ordered_json(to_string(*r.failure))
                           : nlohmann::ordered_json(nullptr);
  return j;
}

inline void write_records(const std::filesystem::path& path,
                          const std::vector<EvalRecord>& records) {
  std::vector<nlohmann::ordered_json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(record_to_json(r));
  jsonl::write_lines(path, rows);
}

inline nlohmann::ordered_json report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["model_name"] = report.model_name;
  j["timestamp"] = report.timestamp;
  j["clamp_count"] = report.clamp_count;
  nlohmann::ordered_json splits = nlohmann::ordered_json::object();
  for (const auto& [split, sr] : report.per_split) {
    nlohmann::ordered_json s;
    s["n_scored"] = sr.n_scored;
    s["n_failed"] = sr.n_failed;
    s["mean_helpfulness"] = sr.mean_helpfulness ? nlohmann::ordered_json(*sr.mean_helpfulness)
                                                : nlohmann::ordered_json(nullptr);
    s["mean_format"] = sr.mean_format ? nlohmann::ordered_json(*sr.mean_format)
                                      : nlohmann::ordered_json(nullptr);
    splits[oifc::to_string(split)] = std::move(s);
  }
  j["splits"] = std::move(splits);
  return j;
}

// Plain-text table with the five benchmark columns.
inline std::string report_table(const EvalReport& report) {
  auto fmt = [](const std::optional<double>& v) -> std::string {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", *v);
    return buf;
  };
  auto split_report = [&](Split s) -> SplitReport {
    auto it = report.per_split.find(s);
    return it == report.per_split.end() ? SplitReport{} : it->second;
  };
  SplitReport id = split_report(Split::TEST_ID);
  SplitReport ood = split_report(Split::TEST_OOD);

  const std::vector<std::string> headers = {"Model", "ID Helpfulness", "ID Format",
                                            "OOD Helpfulness", "OOD Format"};
  const std::vector<std::string> row = {
      report.model_name.empty() ? "-" : report.model_name,
      fmt(id.mean_helpfulness), fmt(id.mean_format),
      fmt(ood.mean_helpfulness), fmt(ood.mean_format)};

  std::string out;
  for (std::size_t c = 0; c < headers.size(); ++c) {
    std::size_t width = std::max(headers[c].size(), row[c].size());
    out += headers[c] + std::string(width - headers[c].size(), ' ');
    if (c + 1 < headers.size()) out += " | ";
  }
  out += '\n';
  for (std::size_t c = 0; c < headers.size(); ++c) {
    std::size_t width = std::max(headers[c].size(), row[c].size());
    out += row[c] + std::string(width - row[c].size(), ' ');
    if (c + 1 < headers.size()) out += " | ";
  }
  out += '\n';
  return out;
}

}  // namespace oifc::benchmark
