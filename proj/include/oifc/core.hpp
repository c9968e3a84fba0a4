#pragma once

// Domain types for one-shot implicit format control samples, plus prompt
// assembly and sample validation.
//
// Format fidelity is the product: nothing here normalizes, escapes or
// truncates text. Bytes in = bytes out.

#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "oifc/errors.hpp"
#include "oifc/templates.hpp"
#include "oifc/text.hpp"

namespace oifc {

// ---------------------------------------------------------------------------
// Enums
// ---------------------------------------------------------------------------

enum class SourceKind { OL_CC, CAT_INS, BELLE2, SHAREGPT, OTHER };

// Upstream dataset tag. OTHER carries the original name so round-trips
// preserve unknown sources.
struct Source {
  SourceKind kind = SourceKind::OTHER;
  std::string other_name;  // set only when kind == OTHER

  static Source ol_cc() { return {SourceKind::OL_CC, {}}; }
  static Source cat_ins() { return {SourceKind::CAT_INS, {}}; }
  static Source belle2() { return {SourceKind::BELLE2, {}}; }
  static Source sharegpt() { return {SourceKind::SHAREGPT, {}}; }
  static Source other(std::string name) { return {SourceKind::OTHER, std::move(name)}; }

  friend bool operator==(const Source& a, const Source& b) {
    return a.kind == b.kind && (a.kind != SourceKind::OTHER || a.other_name == b.other_name);
  }
  friend bool operator!=(const Source& a, const Source& b) { return !(a == b); }
  friend bool operator<(const Source& a, const Source& b) {
    return std::tie(a.kind, a.other_name) < std::tie(b.kind, b.other_name);
  }
};

inline std::string to_string(const Source& s) {
  switch (s.kind) {
    case SourceKind::OL_CC: return "ol_cc";
    case SourceKind::CAT_INS: return "cat_ins";
    case SourceKind::BELLE2: return "belle2";
    case SourceKind::SHAREGPT: return "sharegpt";
    case SourceKind::OTHER: return s.other_name;
  }
  return {};
}

inline Source source_from_string(const std::string& s) {
  if (s == "ol_cc") return Source::ol_cc();
  if (s == "cat_ins") return Source::cat_ins();
  if (s == "belle2") return Source::belle2();
  if (s == "sharegpt") return Source::sharegpt();
  return Source::other(s);
}

enum class Split { TRAIN, TEST_ID, TEST_OOD };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::TRAIN: return "train";
    case Split::TEST_ID: return "test_id";
    case Split::TEST_OOD: return "test_ood";
  }
  return {};
}

inline std::optional<Split> split_from_string(const std::string& s) {
  if (s == "train") return Split::TRAIN;
  if (s == "test_id") return Split::TEST_ID;
  if (s == "test_ood") return Split::TEST_OOD;
  return std::nullopt;
}

enum class Provenance { TYPE1, TYPE2_VARIANT_A, TYPE2_VARIANT_B, IMPORTED };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::TYPE1: return "type1";
    case Provenance::TYPE2_VARIANT_A: return "type2_variant_a";
    case Provenance::TYPE2_VARIANT_B: return "type2_variant_b";
    case Provenance::IMPORTED: return "imported";
  }
  return {};
}

inline std::optional<Provenance> provenance_from_string(const std::string& s) {
  if (s == "type1") return Provenance::TYPE1;
  if (s == "type2_variant_a") return Provenance::TYPE2_VARIANT_A;
  if (s == "type2_variant_b") return Provenance::TYPE2_VARIANT_B;
  if (s == "imported") return Provenance::IMPORTED;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Records and samples
// ---------------------------------------------------------------------------

// One instruct(+optional response) from an upstream dataset.
struct SourceRecord {
  std::string id;
  std::string instruct;                  // i1
  std::optional<std::string> response;   // r1; required for Query Type 1
  Source source;
  std::optional<std::string> category;
};

// One training/benchmark sample: answer `query` imitating the implicit
// format of `one_shot_response`. Optional fields are explicitly absent or
// present; an empty-but-present string is a validation violation.
struct OifcSample {
  std::string id;
  std::optional<std::string> preamble;        // p
  std::optional<std::string> one_shot_query;  // q_one_shot
  std::string one_shot_response;              // r_one_shot
  std::string query;                          // x
  std::string gold_response;                  // y
  Split split = Split::TRAIN;
  Source source;
  Provenance provenance = Provenance::IMPORTED;
};

struct Violation {
  std::string code;
  std::string message;
};

struct ValidationReport {
  std::string sample_id;
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
};

// Lists exactly the violated invariants of the sample; deterministic order.
inline ValidationReport validate_sample(const OifcSample& s) {
  ValidationReport report;
  report.sample_id = s.id;
  auto add = [&](const char* code, const std::string& msg) {
    report.violations.push_back({code, msg});
  };
  if (text::is_blank(s.one_shot_response)) {
    add("EMPTY_ONESHOT_RESPONSE", "one_shot_response is empty");
  }
  if (text::is_blank(s.query)) {
    add("EMPTY_QUERY", "query is empty");
  }
  if (text::is_blank(s.gold_response)) {
    add("EMPTY_GOLD", "gold_response is empty");
  }
  if (s.preamble && text::is_blank(*s.preamble)) {
    add("EMPTY_PREAMBLE", "preamble is present but empty; use null for absent");
  }
  if (s.one_shot_query) {
    if (text::is_blank(*s.one_shot_query)) {
      add("EMPTY_ONESHOT_QUERY", "one_shot_query is present but empty; use null for absent");
    } else if (s.query == *s.one_shot_query) {
      add("QUERY_EQUALS_ONESHOT", "query equals one_shot_query");
    }
  }
  return report;
}

// Per-sample reports plus the cross-sample pair invariant: Type 2 variants A
// and B sharing a parent id must have identical query and distinct (after
// loose normalization) one-shot responses. Pairs are matched by stripping
// the trailing "-a"/"-b" of the sample id.
inline std::vector<ValidationReport> validate_dataset(const std::vector<OifcSample>& samples) {
  std::vector<ValidationReport> reports;
  reports.reserve(samples.size());
  std::map<std::string, const OifcSample*> variant_a;
  for (const auto& s : samples) {
    reports.push_back(validate_sample(s));
    if (s.provenance == Provenance::TYPE2_VARIANT_A && s.id.size() > 2 &&
        s.id.substr(s.id.size() - 2) == "-a") {
      variant_a[s.id.substr(0, s.id.size() - 2)] = &s;
    }
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.provenance != Provenance::TYPE2_VARIANT_B || s.id.size() <= 2 ||
        s.id.substr(s.id.size() - 2) != "-b") {
      continue;
    }
    auto it = variant_a.find(s.id.substr(0, s.id.size() - 2));
    if (it == variant_a.end()) continue;  // unpaired; nothing to check
    const OifcSample& a = *it->second;
    if (a.query != s.query) {
      reports[i].violations.push_back(
          {"TYPE2_PAIR_QUERY_MISMATCH",
           "type2 variants " + a.id + " and " + s.id + " differ in query"});
    }
    if (text::normalize_loose(a.one_shot_response) ==
        text::normalize_loose(s.one_shot_response)) {
      reports[i].violations.push_back(
          {"TYPE2_PAIR_ONESHOT_EQUAL",
           "type2 variants " + a.id + " and " + s.id + " share one_shot_response"});
    }
  }
  return reports;
}

// ---------------------------------------------------------------------------
// Prompt assembly
// ---------------------------------------------------------------------------

// Assembles the one-shot format-control prompt for a sample through the
// given template. Sample fields are bound verbatim; a field absent on the
// sample falls back to the registry default for that template (the built-in
// prompts carry a constant preamble), and otherwise raises UnboundVariable.
inline std::string assemble_oifc_prompt(const OifcSample& sample,
                                        const std::string& template_id,
                                        const templates::TemplateRegistry& registry) {
  ValidationReport report = validate_sample(sample);
  if (!report.ok()) {
    throw Error("InvalidSample",
                "sample " + sample.id + ": " + report.violations.front().code);
  }
  std::map<std::string, std::string> bindings;
  if (const auto* defaults = registry.defaults_for(template_id)) {
    bindings = *defaults;
  }
  if (sample.preamble) bindings["p"] = *sample.preamble;
  if (sample.one_shot_query) bindings["q_one_shot"] = *sample.one_shot_query;
  bindings["r_one_shot"] = sample.one_shot_response;
  bindings["x"] = sample.query;
  return templates::render(registry, template_id, bindings);
}

}  // namespace oifc
