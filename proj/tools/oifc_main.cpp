// Command-line entry point: data synthesis, benchmark evaluation, dataset
// statistics/validation, format diffing and template rendering.
//
// Exit codes: 0 ok, 1 threshold breach or validation failures, 2 config or
// usage error, 3 source/dataset schema error.

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "oifc/benchmark.hpp"
#include "oifc/config.hpp"
#include "oifc/core.hpp"
#include "oifc/format_proxy.hpp"
#include "oifc/gateway.hpp"
#include "oifc/http_transport.hpp"
#include "oifc/jsonl.hpp"
#include "oifc/synthesis.hpp"
#include "oifc/templates.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitThreshold = 1;
constexpr int kExitConfig = 2;
constexpr int kExitSchema = 3;

struct CommonFlags {
  std::string config_path;
  std::string cache_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> concurrency;
  bool dry_run = false;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Run-config file");
  cmd->add_option("--cache-dir", flags.cache_dir, "Response cache directory");
  cmd->add_option("--seed", flags.seed, "Seed for all randomness");
  cmd->add_option("--concurrency", flags.concurrency, "Worker pool size");
  cmd->add_flag("--dry-run", flags.dry_run, "Print requests instead of calling endpoints");
}

// Config file, then flag overrides.
oifc::config::RunConfig resolve_config(const CommonFlags& flags) {
  oifc::config::RunConfig cfg;
  if (!flags.config_path.empty()) {
    cfg = oifc::config::load_config_file(flags.config_path);
  }
  if (!flags.cache_dir.empty()) cfg.cache_dir = flags.cache_dir;
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.concurrency) cfg.concurrency = *flags.concurrency;
  return cfg;
}

oifc::templates::TemplateRegistry build_registry(const oifc::config::RunConfig& cfg) {
  auto registry = oifc::templates::TemplateRegistry::with_builtins();
  if (cfg.template_dir) registry.load_directory(*cfg.template_dir);
  return registry;
}

std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path sibling_file(const fs::path& dataset, const char* suffix) {
  fs::path out = dataset.parent_path();
  out /= dataset.stem().string() + suffix;
  return out;
}

ordered_json features_json(const oifc::format_proxy::FormatFeatures& f) {
  ordered_json j;
  j["line_count"] = f.line_count;
  j["char_length"] = f.char_length;
  j["bullet_lines"] = f.bullet_lines;
  j["numbered_lines"] = f.numbered_lines;
  j["header_lines"] = f.header_lines;
  j["code_fence_blocks"] = f.code_fence_blocks;
  j["blank_line_ratio"] = f.blank_line_ratio;
  j["ends_with_punctuation"] = f.ends_with_punctuation;
  j["table_rows"] = f.table_rows;
  return j;
}

// ---------------------------------------------------------------------------
// synthesize
// ---------------------------------------------------------------------------

struct SynthesizeArgs {
  CommonFlags common;
  std::vector<std::string> sources;
  int query_type = 1;
  std::string out;
  std::string split = "train";
  bool multi_turn = false;
  bool no_dedup = false;
  bool make_test_split = false;
  std::optional<std::size_t> test_id_size;
};

int cmd_synthesize(const SynthesizeArgs& args) {
  auto cfg = resolve_config(args.common);
  auto split = oifc::split_from_string(args.split);
  if (!split) {
    std::cerr << "error: --split must be train, test_id or test_ood\n";
    return kExitConfig;
  }

  std::vector<oifc::SourceRecord> records;
  for (const auto& path : args.sources) {
    auto batch = oifc::jsonl::read_source_records(path);
    records.insert(records.end(), batch.begin(), batch.end());
  }
  if (records.empty()) {
    std::cerr << "error: no source records found\n";
    return kExitSchema;
  }
  if (args.query_type == 1) {
    for (const auto& r : records) {
      if (!r.response || oifc::text::is_blank(*r.response)) {
        std::cerr << "error: record " << r.id
                  << " has no response (required for query type 1)\n";
        return kExitSchema;
      }
    }
  }
  if (!cfg.mix.empty()) {
    records = oifc::synthesis::apply_mix_ratios(records, cfg.mix, cfg.seed);
  }

  auto registry = build_registry(cfg);
  oifc::synthesis::PipelineOptions options;
  options.query_type = args.query_type == 1 ? oifc::synthesis::QueryType::TYPE1
                                            : oifc::synthesis::QueryType::TYPE2;
  options.concurrency = cfg.concurrency;
  options.retry_budget = cfg.retry_budget;
  options.multi_turn = args.multi_turn || cfg.multi_turn;
  options.decoding.max_new_tokens = cfg.max_new_tokens;
  options.split = *split;

  if (args.common.dry_run) {
    for (const auto& rec : records) {
      const char* tpl = options.query_type == oifc::synthesis::QueryType::TYPE1
                            ? "synth_type1_zh"
                            : "synth_type2_zh";
      std::map<std::string, std::string> bindings{{"i1", rec.instruct}};
      if (options.query_type == oifc::synthesis::QueryType::TYPE1) {
        bindings["r1"] = *rec.response;
      }
      oifc::gateway::ChatRequest req;
      req.messages = {{"user", oifc::templates::render(registry, tpl, bindings)}};
      req.decoding = options.decoding;
      const auto* ep = cfg.endpoint("generator");
      req.model_name = ep ? ep->model_name : "";
      std::cout << oifc::gateway::canonical_request_json(req).dump() << "\n";
    }
    return kExitOk;
  }

  const auto* endpoint = cfg.endpoint("generator");
  if (!endpoint || endpoint->base_url.empty()) {
    std::cerr << "error: synthesize requires an [endpoint.generator] with base_url\n";
    return kExitConfig;
  }
  auto cache = std::make_shared<oifc::gateway::ResponseCache>(cfg.cache_dir);
  oifc::gateway::LlmGateway gw(*endpoint,
                               std::make_shared<oifc::gateway::HttplibTransport>(),
                               cache, oifc::gateway::system_clock(), cfg.seed);

  auto result = oifc::synthesis::run_pipeline(records, gw, registry, options);
  auto samples = args.no_dedup ? result.samples : oifc::synthesis::dedup(result.samples);
  std::vector<oifc::synthesis::SynthesisTrace> traces;
  if (args.no_dedup) {
    traces = result.sample_traces;
  } else {
    // keep traces aligned with the deduped sample list
    std::map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < result.samples.size(); ++i) {
      by_id.emplace(result.samples[i].id, i);
    }
    for (const auto& s : samples) traces.push_back(result.sample_traces[by_id.at(s.id)]);
  }

  if (args.make_test_split) {
    std::size_t test_id_size = args.test_id_size.value_or(cfg.test_id_size);
    auto split_result = oifc::synthesis::mix_and_split(samples, test_id_size, cfg.seed);
    std::set<std::string> test_ids;
    for (const auto& s : split_result.test_id) test_ids.insert(s.id);
    for (auto& s : samples) {
      s.split = test_ids.count(s.id) ? oifc::Split::TEST_ID : oifc::Split::TRAIN;
    }
  }

  fs::path out_path(args.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  oifc::jsonl::write_samples(out_path, samples);
  oifc::synthesis::write_traces(sibling_file(out_path, ".trace.jsonl"), samples, traces);
  oifc::synthesis::write_rejects(sibling_file(out_path, ".rejects.jsonl"), result.rejects);

  auto stats = oifc::synthesis::compute_stats(samples);
  auto stats_json = oifc::synthesis::stats_to_json(stats);
  {
    std::ofstream stats_out(sibling_file(out_path, ".stats.json"), std::ios::binary);
    stats_out << stats_json.dump(2) << "\n";
  }
  std::cout << stats_json.dump(2) << "\n";

  double reject_ratio = result.records_processed == 0
                            ? 0.0
                            : static_cast<double>(result.rejects.size()) /
                                  static_cast<double>(result.records_processed);
  if (reject_ratio > cfg.reject_threshold) {
    std::cerr << "error: reject ratio " << reject_ratio << " exceeds threshold "
              << cfg.reject_threshold << "\n";
    return kExitThreshold;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateArgs {
  CommonFlags common;
  std::string dataset;
  std::string out;
  std::string model_name;
  std::string timestamp;
  std::string candidate_template;
};

int cmd_evaluate(const EvaluateArgs& args) {
  auto cfg = resolve_config(args.common);
  auto all = oifc::jsonl::read_samples(args.dataset);
  std::vector<oifc::OifcSample> tests;
  for (auto& s : all) {
    if (s.split == oifc::Split::TEST_ID || s.split == oifc::Split::TEST_OOD) {
      tests.push_back(std::move(s));
    }
  }
  if (tests.empty()) {
    std::cerr << "error: dataset has no test_id/test_ood samples\n";
    return kExitSchema;
  }

  auto registry = build_registry(cfg);
  oifc::benchmark::BenchmarkOptions options;
  options.candidate_template_id =
      !args.candidate_template.empty()
          ? args.candidate_template
          : (cfg.judge_language == oifc::templates::Language::ZH ? "oifc_zh" : "oifc_en");
  options.judge_template_id =
      cfg.judge_language == oifc::templates::Language::ZH ? "judge_zh" : "judge_en";
  options.concurrency = cfg.concurrency;
  options.candidate_max_new_tokens = cfg.max_new_tokens;
  options.judge_max_new_tokens = cfg.max_new_tokens;

  if (args.common.dry_run) {
    for (const auto& s : tests) {
      oifc::gateway::ChatRequest req;
      req.messages = {
          {"user", oifc::assemble_oifc_prompt(s, options.candidate_template_id, registry)}};
      req.decoding.max_new_tokens = options.candidate_max_new_tokens;
      const auto* ep = cfg.endpoint("candidate");
      req.model_name = ep ? ep->model_name : "";
      std::cout << oifc::gateway::canonical_request_json(req).dump() << "\n";
    }
    return kExitOk;
  }

  const auto* candidate_ep = cfg.endpoint("candidate");
  const auto* judge_ep = cfg.endpoint("judge");
  if (!candidate_ep || candidate_ep->base_url.empty() || !judge_ep ||
      judge_ep->base_url.empty()) {
    std::cerr << "error: evaluate requires [endpoint.candidate] and [endpoint.judge]\n";
    return kExitConfig;
  }
  auto cache = std::make_shared<oifc::gateway::ResponseCache>(cfg.cache_dir);
  auto transport = std::make_shared<oifc::gateway::HttplibTransport>();
  oifc::gateway::LlmGateway candidate(*candidate_ep, transport, cache,
                                      oifc::gateway::system_clock(), cfg.seed);
  oifc::gateway::LlmGateway judge(*judge_ep, transport, cache,
                                  oifc::gateway::system_clock(), cfg.seed + 1);

  auto records = oifc::benchmark::run_benchmark(tests, candidate, judge, registry, options);
  auto report = oifc::benchmark::aggregate(records);
  report.model_name = !args.model_name.empty() ? args.model_name : candidate_ep->model_name;
  report.timestamp = !args.timestamp.empty() ? args.timestamp : utc_timestamp();

  fs::path out_base(args.out);
  if (out_base.has_parent_path()) fs::create_directories(out_base.parent_path());
  oifc::benchmark::write_records(fs::path(args.out + ".records.jsonl"), records);
  {
    std::ofstream json_out(args.out + ".report.json", std::ios::binary);
    json_out << oifc::benchmark::report_to_json(report).dump(2) << "\n";
  }
  std::string table = oifc::benchmark::report_table(report);
  {
    std::ofstream table_out(args.out + ".report.txt", std::ios::binary);
    table_out << table;
  }
  std::cout << table;

  std::size_t scored = 0;
  for (const auto& [split, sr] : report.per_split) scored += sr.n_scored;
  double scored_ratio = static_cast<double>(scored) / static_cast<double>(records.size());
  if (scored_ratio < cfg.scored_threshold) {
    std::cerr << "error: scored ratio " << scored_ratio << " below threshold "
              << cfg.scored_threshold << "\n";
    return kExitThreshold;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// stats / validate
// ---------------------------------------------------------------------------

int cmd_stats(const std::string& dataset) {
  auto samples = oifc::jsonl::read_samples(dataset);
  std::cout << oifc::synthesis::stats_to_json(oifc::synthesis::compute_stats(samples)).dump(2)
            << "\n";
  return kExitOk;
}

int cmd_validate(const std::string& dataset) {
  auto samples = oifc::jsonl::read_samples(dataset);
  auto reports = oifc::validate_dataset(samples);
  bool any = false;
  for (const auto& report : reports) {
    if (report.ok()) continue;
    any = true;
    ordered_json j;
    j["sample_id"] = report.sample_id;
    ordered_json violations = ordered_json::array();
    for (const auto& v : report.violations) {
      violations.push_back({{"code", v.code}, {"message", v.message}});
    }
    j["violations"] = std::move(violations);
    std::cout << j.dump() << "\n";
  }
  return any ? kExitThreshold : kExitOk;
}

// ---------------------------------------------------------------------------
// format-diff / render
// ---------------------------------------------------------------------------

int cmd_format_diff(const std::string& file_a, const std::string& file_b) {
  auto read_file = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw oifc::config::ConfigError("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };
  auto fa = oifc::format_proxy::extract_features(read_file(file_a));
  auto fb = oifc::format_proxy::extract_features(read_file(file_b));
  ordered_json j;
  j["a"] = features_json(fa);
  j["b"] = features_json(fb);
  j["similarity"] = oifc::format_proxy::similarity(fa, fb);
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

struct RenderArgs {
  CommonFlags common;
  std::string template_id;
  std::vector<std::string> binds;
};

int cmd_render(const RenderArgs& args) {
  auto cfg = resolve_config(args.common);
  auto registry = build_registry(cfg);
  std::map<std::string, std::string> bindings;
  if (const auto* defaults = registry.defaults_for(args.template_id)) {
    bindings = *defaults;
  }
  for (const auto& bind : args.binds) {
    std::size_t eq = bind.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error: --bind expects key=value, got: " << bind << "\n";
      return kExitConfig;
    }
    bindings[bind.substr(0, eq)] = bind.substr(eq + 1);
  }
  std::cout << oifc::templates::render(registry, args.template_id, bindings) << "\n";
  return kExitOk;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const oifc::jsonl::JsonlError& ex) {
    std::cerr << "schema error: " << ex.what() << "\n";
    return kExitSchema;
  } catch (const oifc::config::ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const oifc::gateway::AuthError& ex) {
    std::cerr << "auth error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const oifc::Error& ex) {
    std::cerr << "error (" << ex.code() << "): " << ex.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"One-shot implicit format control: data synthesis and evaluation toolkit"};
  app.require_subcommand(1);

  SynthesizeArgs synth_args;
  auto* synth = app.add_subcommand(
      "synthesize", "Synthesize one-shot format-control samples from source records");
  add_common_flags(synth, synth_args.common);
  synth->add_option("--source", synth_args.sources, "Source JSONL file(s)")->required();
  synth->add_option("--query-type", synth_args.query_type, "Query type (1 or 2)")
      ->check(CLI::IsMember({1, 2}));
  synth->add_option("--out", synth_args.out, "Output dataset JSONL path")->required();
  synth->add_option("--split", synth_args.split, "Split tag for emitted samples");
  synth->add_flag("--multi-turn", synth_args.multi_turn, "Three-turn Type 1 variant");
  synth->add_flag("--no-dedup", synth_args.no_dedup, "Skip global dedup");
  synth->add_flag("--make-test-split", synth_args.make_test_split,
                  "Carve a stratified test_id split out of the output");
  synth->add_option("--test-id-size", synth_args.test_id_size,
                    "Test split size (overrides the config value)");

  EvaluateArgs eval_args;
  auto* eval = app.add_subcommand("evaluate", "Run the benchmark over a dataset's test splits");
  add_common_flags(eval, eval_args.common);
  eval->add_option("--dataset", eval_args.dataset, "Dataset JSONL path")->required();
  eval->add_option("--out", eval_args.out, "Output prefix for records/report files")->required();
  eval->add_option("--model-name", eval_args.model_name, "Model name for the report");
  eval->add_option("--timestamp", eval_args.timestamp,
                   "Fixed report timestamp (for reproducible runs)");
  eval->add_option("--candidate-template", eval_args.candidate_template,
                   "Prompt template for candidate generation");

  std::string stats_dataset;
  auto* stats = app.add_subcommand("stats", "Print dataset statistics as JSON");
  stats->add_option("--dataset", stats_dataset, "Dataset JSONL path")->required();

  std::string validate_dataset_path;
  auto* validate = app.add_subcommand("validate", "Validate dataset invariants");
  validate->add_option("--dataset", validate_dataset_path, "Dataset JSONL path")->required();

  std::string diff_a, diff_b;
  auto* diff = app.add_subcommand("format-diff",
                                  "Print structural format features and similarity of two files");
  diff->add_option("fileA", diff_a, "First text file")->required();
  diff->add_option("fileB", diff_b, "Second text file")->required();

  RenderArgs render_args;
  auto* render = app.add_subcommand("render", "Render a template with bindings");
  add_common_flags(render, render_args.common);
  render->add_option("--template", render_args.template_id, "Template id")->required();
  render->add_option("--bind", render_args.binds, "Binding key=value (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  if (synth->parsed()) return guarded([&] { return cmd_synthesize(synth_args); });
  if (eval->parsed()) return guarded([&] { return cmd_evaluate(eval_args); });
  if (stats->parsed()) return guarded([&] { return cmd_stats(stats_dataset); });
  if (validate->parsed()) return guarded([&] { return cmd_validate(validate_dataset_path); });
  if (diff->parsed()) return guarded([&] { return cmd_format_diff(diff_a, diff_b); });
  if (render->parsed()) return guarded([&] { return cmd_render(render_args); });
  return kExitConfig;
}
