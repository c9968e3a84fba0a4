#pragma once

// Data-synthesis pipeline: Query Type 1 (similar instruct -> detailed answer
// -> restructured answer) and Query Type 2 (two maximally different formats
// for the same instruct), plus sentinel-section extraction, dedup, source
// mixing, the train/test split and dataset statistics.
//
// Wire format: synthesis replies carry labeled sections delimited by
// 【NAME】 markers. Replies that stay malformed after the configured number
// of corrective re-asks become reject entries; sections are never fabricated.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include <json.hpp>

#include "oifc/core.hpp"
#include "oifc/errors.hpp"
#include "oifc/format_proxy.hpp"
#include "oifc/gateway.hpp"
#include "oifc/jsonl.hpp"
#include "oifc/parallel.hpp"
#include "oifc/templates.hpp"
#include "oifc/text.hpp"

namespace oifc::synthesis {

enum class QueryType { TYPE1 = 1, TYPE2 = 2 };

inline std::string to_string(QueryType q) {
  return q == QueryType::TYPE1 ? "type1" : "type2";
}

// All intermediates of one pipeline run over a source record.
struct SynthesisTrace {
  std::string parent_source_id;
  std::string i1;
  std::optional<std::string> r1;
  std::string i2;
  std::optional<std::string> r_d;   // Type 1 only
  std::optional<std::string> r2;    // Type 1 only
  std::optional<std::string> r1_a;  // Type 2 only
  std::optional<std::string> r1_b;
  std::optional<std::string> r2_a;
  std::optional<std::string> r2_b;
  std::vector<std::string> raw_replies;
  QueryType query_type = QueryType::TYPE1;
};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class MissingSection : public Error {
 public:
  explicit MissingSection(const std::string& name)
      : Error("MissingSection", "reply is missing section 【" + name + "】"),
        section_(name) {}
  const std::string& section() const noexcept { return section_; }

 private:
  std::string section_;
};

class DuplicateSection : public Error {
 public:
  explicit DuplicateSection(const std::string& name)
      : Error("DuplicateSection", "section 【" + name + "】 appears more than once"),
        section_(name) {}
  const std::string& section() const noexcept { return section_; }

 private:
  std::string section_;
};

class FormatsNotDistinct : public Error {
 public:
  FormatsNotDistinct()
      : Error("FormatsNotDistinct",
              "the two answer formats are not structurally distinct") {}
};

class DegenerateInstruct : public Error {
 public:
  DegenerateInstruct()
      : Error("DegenerateInstruct",
              "generated instruct equals the source instruct") {}
};

// ---------------------------------------------------------------------------
// Sentinel-section extraction
// ---------------------------------------------------------------------------

// Splits a reply at 【NAME】 markers for the expected section names. Prose
// before the first marker is discarded; each section's text runs to the next
// expected marker (or end of reply) and is whitespace-trimmed.
inline std::map<std::string, std::string> extract_sections(
    std::string_view reply, const std::vector<std::string>& expected) {
  struct Hit {
    std::size_t pos;
    std::size_t content_start;
    std::size_t which;
  };
  std::vector<Hit> hits;
  for (std::size_t which = 0; which < expected.size(); ++which) {
    std::string marker = "【" + expected[which] + "】";  // 【NAME】
    std::size_t found = 0;
    std::size_t pos = 0;
    while ((pos = reply.find(marker, pos)) != std::string_view::npos) {
      if (++found > 1) throw DuplicateSection(expected[which]);
      hits.push_back({pos, pos + marker.size(), which});
      pos += marker.size();
    }
  }
  for (std::size_t which = 0; which < expected.size(); ++which) {
    bool present = false;
    for (const auto& h : hits) {
      if (h.which == which) {
        present = true;
        break;
      }
    }
    if (!present) throw MissingSection(expected[which]);
  }
  std::sort(hits.begin(), hits.end(),
            [](const Hit& a, const Hit& b) { return a.pos < b.pos; });
  std::map<std::string, std::string> sections;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    std::size_t end = i + 1 < hits.size() ? hits[i + 1].pos : reply.size();
    sections[expected[hits[i].which]] =
        text::trim(reply.substr(hits[i].content_start, end - hits[i].content_start));
  }
  return sections;
}

// ---------------------------------------------------------------------------
// Query Type 1 / Type 2 runners
// ---------------------------------------------------------------------------

struct SynthesisContext {
  gateway::LlmGateway& gw;
  const templates::TemplateRegistry& registry;
  int retry_budget = 2;     // corrective re-asks per malformed reply
  bool multi_turn = false;  // Type 1 three-turn variant
  double max_format_similarity = 0.9;  // Type 2 distinctness gate
  gateway::DecodingParams decoding{0.0, 1.0, 2048};
  Split split = Split::TRAIN;
};

struct Type1Result {
  OifcSample sample;
  SynthesisTrace trace;
};

struct Type2Result {
  OifcSample sample_a;
  OifcSample sample_b;
  SynthesisTrace trace;
};

namespace detail {

inline gateway::ChatRequest make_request(const SynthesisContext& ctx,
                                         std::vector<gateway::ChatMessage> messages) {
  gateway::ChatRequest req;
  req.messages = std::move(messages);
  req.decoding = ctx.decoding;
  req.model_name = ctx.gw.config().model_name;
  return req;
}

inline std::string section_or_missing(const std::map<std::string, std::string>& secs,
                                      const std::string& name) {
  auto it = secs.find(name);
  if (it == secs.end() || text::is_blank(it->second)) throw MissingSection(name);
  return it->second;
}

inline bool is_reply_defect(const Error& e) {
  const std::string& c = e.code();
  return c == "MissingSection" || c == "DuplicateSection" ||
         c == "FormatsNotDistinct" || c == "DegenerateInstruct";
}

// Asks, re-asking with a corrective instruction on malformed replies, until
// `check` accepts the reply or the budget is exhausted. `check` throws a
// reply-defect error to reject a reply. The accepted reply is appended to the
// conversation as an assistant turn.
template <typename Check>
auto ask_checked(SynthesisContext& ctx, std::vector<gateway::ChatMessage>& messages,
                 SynthesisTrace& trace, Check&& check) {
  for (int ask = 0;; ++ask) {
    std::string reply = ctx.gw.complete(make_request(ctx, messages)).text;
    trace.raw_replies.push_back(reply);
    try {
      auto result = check(reply);
      messages.push_back({"assistant", reply});
      return result;
    } catch (const Error& e) {
      if (!is_reply_defect(e) || ask >= ctx.retry_budget) throw;
      messages.push_back({"assistant", reply});
      messages.push_back(
          {"user", templates::render(ctx.registry, "synth_retry_zh",
                                     {{"problem", e.what()}})});
    }
  }
}

struct Type1Sections {
  std::string i2, r_d, r2;
};

inline Type1Result run_type1_single(const SourceRecord& rec, SynthesisContext& ctx,
                                    SynthesisTrace trace) {
  std::vector<gateway::ChatMessage> messages{
      {"user", templates::render(ctx.registry, "synth_type1_zh",
                                 {{"i1", rec.instruct}, {"r1", *rec.response}})}};
  auto secs = ask_checked(ctx, messages, trace, [&](const std::string& reply) {
    auto parts = extract_sections(reply, {"I2", "RD", "R2"});
    Type1Sections s{section_or_missing(parts, "I2"), section_or_missing(parts, "RD"),
                    section_or_missing(parts, "R2")};
    if (text::normalize_loose(s.i2) == text::normalize_loose(rec.instruct)) {
      throw DegenerateInstruct();
    }
    return s;
  });

  trace.i2 = secs.i2;
  trace.r_d = secs.r_d;
  trace.r2 = secs.r2;

  OifcSample sample;
  sample.id = rec.id + "-t1";
  sample.one_shot_query = rec.instruct;       // i1
  sample.one_shot_response = *rec.response;   // r1
  sample.query = secs.i2;                     // i2
  sample.gold_response = secs.r2;             // r2
  sample.split = ctx.split;
  sample.source = rec.source;
  sample.provenance = Provenance::TYPE1;
  return Type1Result{std::move(sample), std::move(trace)};
}

inline Type1Result run_type1_multi(const SourceRecord& rec, SynthesisContext& ctx,
                                   SynthesisTrace trace) {
  std::vector<gateway::ChatMessage> messages{
      {"user", templates::render(ctx.registry, "synth_type1_turn1_zh",
                                 {{"i1", rec.instruct}, {"r1", *rec.response}})}};
  std::string i2 = ask_checked(ctx, messages, trace, [&](const std::string& reply) {
    std::string v = section_or_missing(extract_sections(reply, {"I2"}), "I2");
    if (text::normalize_loose(v) == text::normalize_loose(rec.instruct)) {
      throw DegenerateInstruct();
    }
    return v;
  });

  messages.push_back({"user", templates::render(ctx.registry, "synth_type1_turn2_zh", {})});
  std::string r_d = ask_checked(ctx, messages, trace, [&](const std::string& reply) {
    return section_or_missing(extract_sections(reply, {"RD"}), "RD");
  });

  messages.push_back({"user", templates::render(ctx.registry, "synth_type1_turn3_zh", {})});
  std::string r2 = ask_checked(ctx, messages, trace, [&](const std::string& reply) {
    return section_or_missing(extract_sections(reply, {"R2"}), "R2");
  });

  trace.i2 = i2;
  trace.r_d = r_d;
  trace.r2 = r2;

  OifcSample sample;
  sample.id = rec.id + "-t1";
  sample.one_shot_query = rec.instruct;
  sample.one_shot_response = *rec.response;
  sample.query = i2;
  sample.gold_response = r2;
  sample.split = ctx.split;
  sample.source = rec.source;
  sample.provenance = Provenance::TYPE1;
  return Type1Result{std::move(sample), std::move(trace)};
}

}  // namespace detail

// Query Type 1: one-shot pair = (i1, r1) from the source, query = generated
// similar instruct i2, supervision = r_d restructured to r1's format.
inline Type1Result run_type1(const SourceRecord& rec, SynthesisContext& ctx) {
  if (!rec.response || text::is_blank(*rec.response)) {
    throw Error("MissingSourceResponse",
                "record " + rec.id + " has no response (required for query type 1)");
  }
  SynthesisTrace trace;
  trace.parent_source_id = rec.id;
  trace.i1 = rec.instruct;
  trace.r1 = rec.response;
  trace.query_type = QueryType::TYPE1;
  return ctx.multi_turn ? detail::run_type1_multi(rec, ctx, std::move(trace))
                        : detail::run_type1_single(rec, ctx, std::move(trace));
}

// Query Type 2: the model invents two maximally different formats, answers
// i1 in both (r1_a, r1_b), generates similar instruct i2 and answers it in
// both formats (r2_a, r2_b). Emits two samples sharing query = i2.
inline Type2Result run_type2(const SourceRecord& rec, SynthesisContext& ctx) {
  SynthesisTrace trace;
  trace.parent_source_id = rec.id;
  trace.i1 = rec.instruct;
  trace.query_type = QueryType::TYPE2;

  struct Sections {
    std::string r1_a, r1_b, i2, r2_a, r2_b;
  };
  std::vector<gateway::ChatMessage> messages{
      {"user", templates::render(ctx.registry, "synth_type2_zh",
                                 {{"i1", rec.instruct}})}};
  auto secs = detail::ask_checked(ctx, messages, trace, [&](const std::string& reply) {
    auto parts = extract_sections(reply, {"R1A", "R1B", "I2", "R2A", "R2B"});
    Sections s{detail::section_or_missing(parts, "R1A"),
               detail::section_or_missing(parts, "R1B"),
               detail::section_or_missing(parts, "I2"),
               detail::section_or_missing(parts, "R2A"),
               detail::section_or_missing(parts, "R2B")};
    if (text::normalize_loose(s.r1_a) == text::normalize_loose(s.r1_b)) {
      throw FormatsNotDistinct();
    }
    if (format_proxy::similarity(s.r1_a, s.r1_b) >= ctx.max_format_similarity) {
      throw FormatsNotDistinct();
    }
    if (text::normalize_loose(s.i2) == text::normalize_loose(rec.instruct)) {
      throw DegenerateInstruct();
    }
    return s;
  });

  trace.r1_a = secs.r1_a;
  trace.r1_b = secs.r1_b;
  trace.i2 = secs.i2;
  trace.r2_a = secs.r2_a;
  trace.r2_b = secs.r2_b;

  auto make_sample = [&](const char* suffix, const std::string& one_shot,
                         const std::string& gold, Provenance prov) {
    OifcSample s;
    s.id = rec.id + suffix;
    s.one_shot_query = rec.instruct;
    s.one_shot_response = one_shot;
    s.query = secs.i2;
    s.gold_response = gold;
    s.split = ctx.split;
    s.source = rec.source;
    s.provenance = prov;
    return s;
  };
  return Type2Result{
      make_sample("-t2-a", secs.r1_a, secs.r2_a, Provenance::TYPE2_VARIANT_A),
      make_sample("-t2-b", secs.r1_b, secs.r2_b, Provenance::TYPE2_VARIANT_B),
      std::move(trace)};
}

// ---------------------------------------------------------------------------
// Dedup
// ---------------------------------------------------------------------------

// Drops samples whose normalized (lowercased, whitespace-collapsed) query +
// one_shot_response duplicates an earlier sample. Stable; first wins.
inline std::vector<OifcSample> dedup(const std::vector<OifcSample>& samples) {
  std::vector<OifcSample> out;
  out.reserve(samples.size());
  std::unordered_set<std::string> seen;
  for (const auto& s : samples) {
    std::string key = text::normalize_loose(s.query);
    key.push_back('\x1f');
    key += text::normalize_loose(s.one_shot_response);
    if (seen.insert(std::move(key)).second) out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic RNG (identical across platforms)
// ---------------------------------------------------------------------------

namespace rng {

struct SplitMix64 {
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // [0, n); the modulo bias is irrelevant for shuffling purposes here.
  std::uint64_t bounded(std::uint64_t n) { return n == 0 ? 0 : next() % n; }
};

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.bounded(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace rng

// ---------------------------------------------------------------------------
// Mixing and splitting
// ---------------------------------------------------------------------------

struct SplitResult {
  std::vector<OifcSample> train;
  std::vector<OifcSample> test_id;
};

namespace detail {

// Largest-remainder allocation of `total` across groups proportional to
// group sizes, capped at each group's size. Deterministic.
inline std::map<Source, std::size_t> proportional_quotas(
    const std::map<Source, std::size_t>& group_sizes, std::size_t population,
    std::size_t total) {
  std::map<Source, std::size_t> quota;
  std::vector<std::pair<double, Source>> remainders;
  std::size_t assigned = 0;
  for (const auto& [src, n] : group_sizes) {
    double exact = population == 0
                       ? 0.0
                       : static_cast<double>(total) * static_cast<double>(n) /
                             static_cast<double>(population);
    auto base = static_cast<std::size_t>(exact);
    if (base > n) base = n;
    quota[src] = base;
    assigned += base;
    remainders.push_back({exact - static_cast<double>(base), src});
  }
  std::sort(remainders.begin(), remainders.end(),
            [](const auto& a, const auto& b) {
              if (a.first != b.first) return a.first > b.first;
              return a.second < b.second;
            });
  while (assigned < total) {
    bool progressed = false;
    for (const auto& [rem, src] : remainders) {
      if (assigned >= total) break;
      if (quota[src] < group_sizes.at(src)) {
        ++quota[src];
        ++assigned;
        progressed = true;
      }
    }
    if (!progressed) break;  // every group is exhausted
  }
  return quota;
}

}  // namespace detail

// Seeded, stratified partition into {TRAIN, TEST_ID}. Per-source proportions
// in TEST_ID track the corpus (largest-remainder quotas); the shuffle is a
// fully specified Fisher-Yates over SplitMix64, so identical seed and input
// give identical output on every platform. Output order follows input order.
inline SplitResult mix_and_split(const std::vector<OifcSample>& samples,
                                 std::size_t test_id_size, std::uint64_t seed) {
  if (test_id_size > samples.size()) {
    throw Error("InsufficientSamples",
                "test_id_size " + std::to_string(test_id_size) + " exceeds corpus size " +
                    std::to_string(samples.size()));
  }
  std::map<Source, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    groups[samples[i].source].push_back(i);
  }
  std::map<Source, std::size_t> sizes;
  for (const auto& [src, idx] : groups) sizes[src] = idx.size();
  auto quota = detail::proportional_quotas(sizes, samples.size(), test_id_size);

  std::vector<bool> in_test(samples.size(), false);
  for (auto& [src, indices] : groups) {
    rng::SplitMix64 prng(seed ^ rng::fnv1a64(to_string(src)));
    rng::shuffle(indices, prng);
    for (std::size_t k = 0; k < quota[src]; ++k) in_test[indices[k]] = true;
  }

  SplitResult result;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    OifcSample s = samples[i];
    if (in_test[i]) {
      s.split = Split::TEST_ID;
      result.test_id.push_back(std::move(s));
    } else {
      s.split = Split::TRAIN;
      result.train.push_back(std::move(s));
    }
  }
  return result;
}

// Downsamples per-source pools to the given weight ratios; the total is the
// largest feasible count. Records whose source has no weight are dropped.
// Output keeps the original record order.
inline std::vector<SourceRecord> apply_mix_ratios(
    const std::vector<SourceRecord>& records,
    const std::map<Source, double>& weights, std::uint64_t seed) {
  double weight_sum = 0.0;
  for (const auto& [src, w] : weights) {
    if (w <= 0.0) throw Error("ConfigError", "mix weight must be positive for " + to_string(src));
    weight_sum += w;
  }
  std::map<Source, std::vector<std::size_t>> pools;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (weights.count(records[i].source)) pools[records[i].source].push_back(i);
  }
  // Largest total T with w_s/W * T <= n_s for every weighted source.
  double feasible = 0.0;
  bool first = true;
  for (const auto& [src, w] : weights) {
    auto it = pools.find(src);
    std::size_t n = it == pools.end() ? 0 : it->second.size();
    double cap = static_cast<double>(n) * weight_sum / w;
    if (first || cap < feasible) feasible = cap;
    first = false;
  }
  auto total = static_cast<std::size_t>(feasible);

  std::map<Source, std::size_t> sizes;
  std::map<Source, std::size_t> targets;
  std::size_t assigned = 0;
  std::vector<std::pair<double, Source>> remainders;
  for (const auto& [src, w] : weights) {
    auto it = pools.find(src);
    std::size_t n = it == pools.end() ? 0 : it->second.size();
    sizes[src] = n;
    double exact = static_cast<double>(total) * w / weight_sum;
    auto base = std::min(static_cast<std::size_t>(exact), n);
    targets[src] = base;
    assigned += base;
    remainders.push_back({exact - static_cast<double>(base), src});
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (const auto& [rem, src] : remainders) {
    if (assigned >= total) break;
    if (targets[src] < sizes[src]) {
      ++targets[src];
      ++assigned;
    }
  }

  std::vector<bool> keep(records.size(), false);
  for (auto& [src, indices] : pools) {
    rng::SplitMix64 prng(seed ^ rng::fnv1a64("mix:" + to_string(src)));
    rng::shuffle(indices, prng);
    for (std::size_t k = 0; k < targets[src]; ++k) keep[indices[k]] = true;
  }
  std::vector<SourceRecord> out;
  out.reserve(total);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (keep[i]) out.push_back(records[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

inline constexpr std::array<std::size_t, 4> kLengthBucketBounds{50, 200, 500, 2000};
inline constexpr std::array<const char*, 5> kLengthBucketLabels{
    "[0,50)", "[50,200)", "[200,500)", "[500,2000)", "[2000,inf)"};

inline std::size_t length_bucket(std::size_t scalars) {
  for (std::size_t i = 0; i < kLengthBucketBounds.size(); ++i) {
    if (scalars < kLengthBucketBounds[i]) return i;
  }
  return kLengthBucketBounds.size();
}

struct DatasetStats {
  std::size_t total = 0;
  std::map<Source, std::size_t> per_source;
  std::map<Split, std::size_t> per_split;
  std::map<Provenance, std::size_t> per_provenance;
  std::array<std::size_t, 5> one_shot_response_lengths{};
  std::array<std::size_t, 5> gold_response_lengths{};
};

inline DatasetStats compute_stats(const std::vector<OifcSample>& samples) {
  DatasetStats stats;
  stats.total = samples.size();
  for (const auto& s : samples) {
    ++stats.per_source[s.source];
    ++stats.per_split[s.split];
    ++stats.per_provenance[s.provenance];
    ++stats.one_shot_response_lengths[length_bucket(text::scalar_count(s.one_shot_response))];
    ++stats.gold_response_lengths[length_bucket(text::scalar_count(s.gold_response))];
  }
  return stats;
}

// Source-manifest statistics (category coverage lives on source records).
struct SourceStats {
  std::size_t total = 0;
  std::map<Source, std::size_t> per_source;
  std::map<Source, std::size_t> distinct_categories;
};

inline SourceStats compute_source_stats(const std::vector<SourceRecord>& records) {
  SourceStats stats;
  stats.total = records.size();
  std::map<Source, std::unordered_set<std::string>> categories;
  for (const auto& r : records) {
    ++stats.per_source[r.source];
    if (r.category) categories[r.source].insert(*r.category);
  }
  for (const auto& [src, set] : categories) {
    stats.distinct_categories[src] = set.size();
  }
  return stats;
}

inline nlohmann::ordered_json stats_to_json(const DatasetStats& stats) {
  nlohmann::ordered_json j;
  j["total"] = stats.total;
  nlohmann::ordered_json per_source = nlohmann::ordered_json::object();
  for (const auto& [src, n] : stats.per_source) per_source[to_string(src)] = n;
  j["per_source"] = std::move(per_source);
  nlohmann::ordered_json per_split = nlohmann::ordered_json::object();
  for (const auto& [split, n] : stats.per_split) per_split[oifc::to_string(split)] = n;
  j["per_split"] = std::move(per_split);
  nlohmann::ordered_json per_prov = nlohmann::ordered_json::object();
  for (const auto& [prov, n] : stats.per_provenance) per_prov[oifc::to_string(prov)] = n;
  j["per_provenance"] = std::move(per_prov);
  nlohmann::ordered_json hist;
  hist["buckets"] = kLengthBucketLabels;
  hist["one_shot_response"] = stats.one_shot_response_lengths;
  hist["gold_response"] = stats.gold_response_lengths;
  j["length_histograms"] = std::move(hist);
  return j;
}

// ---------------------------------------------------------------------------
// Pipeline runner
// ---------------------------------------------------------------------------

struct PipelineOptions {
  QueryType query_type = QueryType::TYPE1;
  int concurrency = 1;
  int retry_budget = 2;
  bool multi_turn = false;
  double max_format_similarity = 0.9;
  gateway::DecodingParams decoding{0.0, 1.0, 2048};
  Split split = Split::TRAIN;
};

struct RejectEntry {
  std::string source_id;
  std::string code;
  std::string message;
};

struct PipelineResult {
  std::vector<OifcSample> samples;
  std::vector<SynthesisTrace> sample_traces;  // parallel to samples
  std::vector<RejectEntry> rejects;
  std::size_t records_processed = 0;
};

// Processes source records on a bounded worker pool. Output order is by
// input record index, never by completion time, so runs with different
// concurrency levels produce identical files. Per-record failures become
// reject entries; auth failures abort the run.
inline PipelineResult run_pipeline(const std::vector<SourceRecord>& records,
                                   gateway::LlmGateway& gw,
                                   const templates::TemplateRegistry& registry,
                                   const PipelineOptions& options) {
  struct Outcome {
    std::vector<OifcSample> samples;
    std::vector<SynthesisTrace> traces;
    std::optional<RejectEntry> reject;
  };
  std::vector<Outcome> outcomes(records.size());

  parallel_for_index(records.size(), options.concurrency, [&](std::size_t i) {
    SynthesisContext ctx{gw,
                         registry,
                         options.retry_budget,
                         options.multi_turn,
                         options.max_format_similarity,
                         options.decoding,
                         options.split};
    Outcome& out = outcomes[i];
    try {
      if (options.query_type == QueryType::TYPE1) {
        auto result = run_type1(records[i], ctx);
        out.samples.push_back(std::move(result.sample));
        out.traces.push_back(std::move(result.trace));
      } else {
        auto result = run_type2(records[i], ctx);
        out.samples.push_back(std::move(result.sample_a));
        out.traces.push_back(result.trace);
        out.samples.push_back(std::move(result.sample_b));
        out.traces.push_back(std::move(result.trace));
      }
      for (const auto& s : out.samples) {
        auto report = validate_sample(s);
        if (!report.ok()) {
          out.samples.clear();
          out.traces.clear();
          out.reject = RejectEntry{records[i].id, report.violations.front().code,
                                   "emitted sample failed validation: " +
                                       report.violations.front().message};
          break;
        }
      }
    } catch (const gateway::AuthError&) {
      throw;  // configuration problem; abort the whole run
    } catch (const Error& e) {
      out.samples.clear();
      out.traces.clear();
      out.reject = RejectEntry{records[i].id, e.code(), e.what()};
    }
  });

  PipelineResult result;
  result.records_processed = records.size();
  for (auto& out : outcomes) {
    for (std::size_t k = 0; k < out.samples.size(); ++k) {
      result.samples.push_back(std::move(out.samples[k]));
      result.sample_traces.push_back(std::move(out.traces[k]));
    }
    if (out.reject) result.rejects.push_back(std::move(*out.reject));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Trace / reject serialization
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json trace_to_json(const std::string& sample_id,
                                            const SynthesisTrace& t) {
  auto opt = [](const std::optional<std::string>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json j;
  j["sample_id"] = sample_id;
  j["parent_source_id"] = t.parent_source_id;
  j["query_type"] = to_string(t.query_type);
  j["i1"] = t.i1;
  j["r1"] = opt(t.r1);
  j["i2"] = t.i2;
  j["r_d"] = opt(t.r_d);
  j["r2"] = opt(t.r2);
  j["r1_a"] = opt(t.r1_a);
  j["r1_b"] = opt(t.r1_b);
  j["r2_a"] = opt(t.r2_a);
  j["r2_b"] = opt(t.r2_b);
  j["raw_replies"] = t.raw_replies;
  return j;
}

inline void write_traces(const std::filesystem::path& path,
                         const std::vector<OifcSample>& samples,
                         const std::vector<SynthesisTrace>& traces) {
  if (samples.size() != traces.size()) {
    throw Error("TraceMismatch", "trace list does not align with the sample list");
  }
  std::vector<nlohmann::ordered_json> rows;
  rows.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    rows.push_back(trace_to_json(samples[i].id, traces[i]));
  }
  jsonl::write_lines(path, rows);
}

inline void write_rejects(const std::filesystem::path& path,
                          const std::vector<RejectEntry>& rejects) {
  std::vector<nlohmann::ordered_json> rows;
  rows.reserve(rejects.size());
  for (const auto& r : rejects) {
    nlohmann::ordered_json j;
    j["source_id"] = r.source_id;
    j["code"] = r.code;
    j["message"] = r.message;
    rows.push_back(std::move(j));
  }
  jsonl::write_lines(path, rows);
}

}  // namespace oifc::synthesis
