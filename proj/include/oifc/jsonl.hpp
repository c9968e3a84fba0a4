#pragma once

// JSONL reading/writing for the documented file schemas. Dataset rows keep a
// fixed field order and serialize absent optionals as null.

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oifc/core.hpp"
#include "oifc/errors.hpp"

namespace oifc::jsonl {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

class JsonlError : public Error {
 public:
  JsonlError(const fs::path& path, std::size_t line, const std::string& message)
      : Error("JsonlError",
              path.string() + ":" + std::to_string(line) + ": " + message),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Parses every line of a JSONL file as an object and calls fn(line_no, obj).
// Line numbers are 1-based; blank interior lines and non-object rows are
// schema errors.
inline void for_each_object(const fs::path& path,
                            const std::function<void(std::size_t, const nlohmann::json&)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("FileOpen", "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (in.peek() == std::ifstream::traits_type::eof()) break;  // trailing newline
      throw JsonlError(path, line_no, "blank line");
    }
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw JsonlError(path, line_no, ex.what());
    }
    if (!obj.is_object()) throw JsonlError(path, line_no, "row is not a JSON object");
    fn(line_no, obj);
  }
}

inline void write_lines(const fs::path& path, const std::vector<ordered_json>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("FileOpen", "cannot open " + path.string() + " for writing");
  for (const auto& row : rows) {
    out << row.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// SourceRecord: {id, instruct, response?, source, category?}
// ---------------------------------------------------------------------------

inline ordered_json to_json(const SourceRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["instruct"] = r.instruct;
  j["response"] = r.response ? ordered_json(*r.response) : ordered_json(nullptr);
  j["source"] = to_string(r.source);
  j["category"] = r.category ? ordered_json(*r.category) : ordered_json(nullptr);
  return j;
}

namespace detail {

inline std::string require_string(const nlohmann::json& obj, const char* key,
                                  const fs::path& path, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw JsonlError(path, line, std::string("missing or non-string field '") + key + "'");
  }
  return it->get<std::string>();
}

inline std::optional<std::string> optional_string(const nlohmann::json& obj, const char* key,
                                                  const fs::path& path, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw JsonlError(path, line, std::string("field '") + key + "' must be a string or null");
  }
  return it->get<std::string>();
}

}  // namespace detail

inline std::vector<SourceRecord> read_source_records(const fs::path& path) {
  std::vector<SourceRecord> out;
  for_each_object(path, [&](std::size_t line, const nlohmann::json& obj) {
    SourceRecord r;
    r.id = detail::require_string(obj, "id", path, line);
    r.instruct = detail::require_string(obj, "instruct", path, line);
    if (text::is_blank(r.instruct)) throw JsonlError(path, line, "instruct is empty");
    r.response = detail::optional_string(obj, "response", path, line);
    r.source = source_from_string(detail::require_string(obj, "source", path, line));
    r.category = detail::optional_string(obj, "category", path, line);
    out.push_back(std::move(r));
  });
  return out;
}

// ---------------------------------------------------------------------------
// OifcSample dataset rows, fixed field order:
// id, preamble, one_shot_query, one_shot_response, query, gold_response,
// split, source, provenance
// ---------------------------------------------------------------------------

inline ordered_json to_json(const OifcSample& s) {
  ordered_json j;
  j["id"] = s.id;
  j["preamble"] = s.preamble ? ordered_json(*s.preamble) : ordered_json(nullptr);
  j["one_shot_query"] =
      s.one_shot_query ? ordered_json(*s.one_shot_query) : ordered_json(nullptr);
  j["one_shot_response"] = s.one_shot_response;
  j["query"] = s.query;
  j["gold_response"] = s.gold_response;
  j["split"] = to_string(s.split);
  j["source"] = to_string(s.source);
  j["provenance"] = to_string(s.provenance);
  return j;
}

inline std::vector<OifcSample> read_samples(const fs::path& path) {
  std::vector<OifcSample> out;
  for_each_object(path, [&](std::size_t line, const nlohmann::json& obj) {
    OifcSample s;
    s.id = detail::require_string(obj, "id", path, line);
    s.preamble = detail::optional_string(obj, "preamble", path, line);
    s.one_shot_query = detail::optional_string(obj, "one_shot_query", path, line);
    s.one_shot_response = detail::require_string(obj, "one_shot_response", path, line);
    s.query = detail::require_string(obj, "query", path, line);
    s.gold_response = detail::require_string(obj, "gold_response", path, line);
    auto split = split_from_string(detail::require_string(obj, "split", path, line));
    if (!split) throw JsonlError(path, line, "unknown split value");
    s.split = *split;
    s.source = source_from_string(detail::require_string(obj, "source", path, line));
    auto prov = provenance_from_string(detail::require_string(obj, "provenance", path, line));
    if (!prov) throw JsonlError(path, line, "unknown provenance value");
    s.provenance = *prov;
    out.push_back(std::move(s));
  });
  return out;
}

inline void write_samples(const fs::path& path, const std::vector<OifcSample>& samples) {
  std::vector<ordered_json> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) rows.push_back(to_json(s));
  write_lines(path, rows);
}

}  // namespace oifc::jsonl
