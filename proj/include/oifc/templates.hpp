#pragma once

// Named text templates with {{var}} substitution. Ships the bilingual
// one-shot-format prompt, the synthesis-query prompts, and the judge prompt
// as embedded built-ins; a template directory can override any of them.
//
// The placeholder language is deliberately tiny: `{{name}}` with
// name = [a-z0-9_]+, no conditionals, no loops, no escaping. Bindings are
// inserted verbatim.

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "oifc/errors.hpp"

namespace oifc::templates {

enum class Language { ZH, EN };

inline std::string to_string(Language lang) {
  return lang == Language::ZH ? "zh" : "en";
}

struct Template {
  std::string id;
  Language language = Language::ZH;
  std::string body;
  std::set<std::string> required_vars;  // distinct placeholders in body
};

struct LintFinding {
  std::string code;  // MALFORMED_PLACEHOLDER | UNDECLARED_PLACEHOLDER | UNUSED_VARIABLE
  std::string detail;
};

class UnknownTemplate : public Error {
 public:
  explicit UnknownTemplate(const std::string& id)
      : Error("UnknownTemplate", "unknown template id: " + id) {}
};

class UnboundVariable : public Error {
 public:
  explicit UnboundVariable(const std::string& name)
      : Error("UnboundVariable", "no binding for template variable: " + name),
        name_(name) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

inline bool valid_placeholder_name(std::string_view name) {
  if (name.empty()) return false;
  for (char c : name) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    if (!ok) return false;
  }
  return true;
}

namespace detail {

// Calls fn(name, begin, end) for every well-formed `{{name}}` in body.
// Text that merely looks like a placeholder (bad name, unterminated) is
// treated as literal.
template <typename Fn>
void scan_placeholders(std::string_view body, Fn&& fn) {
  std::size_t pos = 0;
  while (pos < body.size()) {
    std::size_t open = body.find("{{", pos);
    if (open == std::string_view::npos) return;
    std::size_t name_start = open + 2;
    std::size_t p = name_start;
    while (p < body.size() &&
           ((body[p] >= 'a' && body[p] <= 'z') ||
            (body[p] >= '0' && body[p] <= '9') || body[p] == '_')) {
      ++p;
    }
    if (p > name_start && p + 1 < body.size() && body[p] == '}' &&
        body[p + 1] == '}') {
      fn(body.substr(name_start, p - name_start), open, p + 2);
      pos = p + 2;
    } else {
      pos = open + 1;
    }
  }
}

}  // namespace detail

inline std::set<std::string> placeholders_in(std::string_view body) {
  std::set<std::string> names;
  detail::scan_placeholders(body, [&](std::string_view name, std::size_t, std::size_t) {
    names.emplace(name);
  });
  return names;
}

// Builds a Template whose required_vars are derived from the body.
inline Template make_template(std::string id, Language lang, std::string body) {
  Template t;
  t.id = std::move(id);
  t.language = lang;
  t.required_vars = placeholders_in(body);
  t.body = std::move(body);
  return t;
}

inline std::vector<LintFinding> lint_template(const Template& t) {
  std::vector<LintFinding> findings;
  // Malformed placeholders: anything shaped like {{...}} whose inner text is
  // not a valid name.
  std::size_t pos = 0;
  while (true) {
    std::size_t open = t.body.find("{{", pos);
    if (open == std::string::npos) break;
    std::size_t close = t.body.find("}}", open + 2);
    if (close == std::string::npos) break;
    std::string inner = t.body.substr(open + 2, close - open - 2);
    if (!valid_placeholder_name(inner) && inner.find("{{") == std::string::npos) {
      findings.push_back({"MALFORMED_PLACEHOLDER", inner});
      pos = close + 2;
    } else {
      pos = open + 1;
    }
  }
  auto found = placeholders_in(t.body);
  for (const auto& name : found) {
    if (!t.required_vars.count(name)) {
      findings.push_back({"UNDECLARED_PLACEHOLDER", name});
    }
  }
  for (const auto& name : t.required_vars) {
    if (!found.count(name)) {
      findings.push_back({"UNUSED_VARIABLE", name});
    }
  }
  return findings;
}

class TemplateRegistry {
 public:
  void add(Template t) { templates_[t.id] = std::move(t); }

  void set_defaults(const std::string& id,
                    std::map<std::string, std::string> defaults) {
    defaults_[id] = std::move(defaults);
  }

  bool contains(const std::string& id) const { return templates_.count(id) > 0; }

  const Template& get(const std::string& id) const {
    auto it = templates_.find(id);
    if (it == templates_.end()) throw UnknownTemplate(id);
    return it->second;
  }

  // Registry-level default bindings (e.g. the constant preamble of the
  // one-shot prompt). They survive body overrides from template files.
  const std::map<std::string, std::string>* defaults_for(const std::string& id) const {
    auto it = defaults_.find(id);
    return it == defaults_.end() ? nullptr : &it->second;
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(templates_.size());
    for (const auto& [id, t] : templates_) out.push_back(id);
    return out;
  }

  // Loads every `<id>.<lang>.tmpl` file in dir, replacing same-id templates.
  // File content is the body; a single trailing newline, if present, is
  // stripped (text editors append one).
  void load_directory(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) {
      throw Error("TemplateDirMissing", "not a directory: " + dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".tmpl") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
      std::string stem = path.stem().string();  // "<id>.<lang>"
      std::size_t dot = stem.rfind('.');
      if (dot == std::string::npos) {
        throw Error("TemplateFileName",
                    "template file must be named <id>.<lang>.tmpl: " + path.string());
      }
      std::string id = stem.substr(0, dot);
      std::string lang = stem.substr(dot + 1);
      if (lang != "zh" && lang != "en") {
        throw Error("TemplateFileName", "unknown template language: " + lang);
      }
      std::ifstream in(path, std::ios::binary);
      std::ostringstream buf;
      buf << in.rdbuf();
      std::string body = buf.str();
      if (!body.empty() && body.back() == '\n') body.pop_back();
      add(make_template(id, lang == "zh" ? Language::ZH : Language::EN,
                        std::move(body)));
    }
  }

  static TemplateRegistry with_builtins();

 private:
  std::map<std::string, Template> templates_;
  std::map<std::string, std::map<std::string, std::string>> defaults_;
};

// Substitutes every placeholder in the template with bindings[name].
// Bindings not used by the template are ignored; a missing binding for a
// required variable throws UnboundVariable.
inline std::string render(const TemplateRegistry& registry,
                          const std::string& template_id,
                          const std::map<std::string, std::string>& bindings) {
  const Template& t = registry.get(template_id);
  std::string out;
  out.reserve(t.body.size());
  std::size_t emitted = 0;
  detail::scan_placeholders(
      t.body, [&](std::string_view name, std::size_t begin, std::size_t end) {
        out.append(t.body, emitted, begin - emitted);
        auto it = bindings.find(std::string(name));
        if (it == bindings.end()) throw UnboundVariable(std::string(name));
        out.append(it->second);
        emitted = end;
      });
  out.append(t.body, emitted, t.body.size() - emitted);
  return out;
}

// ---------------------------------------------------------------------------
// Built-in templates.
//
// oifc_zh / oifc_en are the bilingual one-shot format-control user prompts;
// judge_zh / judge_en are the two-criteria scoring prompts. The synth_*
// prompts drive the two data-synthesis query types; their replies must use
// the sentinel section markers that the extraction layer understands
// (see synthesis.hpp).
// ---------------------------------------------------------------------------

namespace builtin {

inline constexpr const char* kOifcZhPreamble = "以下是一对示例问题和示例回答。";
inline constexpr const char* kOifcEnPreamble =
    "The following is a pair of example question and answer.";

inline constexpr const char* kOifcZhBody =
    "{{p}}\n"
    "【示例问题】\n"
    "{{q_one_shot}}\n"
    "【示例回答】\n"
    "{{r_one_shot}}\n"
    "\n"
    "请回答以下问题，同时尽量保证回答的格式与上述【示例回答】相同。\n"
    "【问题】\n"
    "{{x}}";

inline constexpr const char* kOifcEnBody =
    "{{p}}\n"
    "**Example Question**\n"
    "{{q_one_shot}}\n"
    "**Example Answer**\n"
    "{{r_one_shot}}\n"
    "\n"
    "Please answer the following question with the closest format to the example answer.\n"
    "**Question**\n"
    "{{x}}";

inline constexpr const char* kJudgeZhBody =
    "请你需要为一个问题的回答打分。我会先给出一对示例问题和示例回答，然后提出待回答的问题。"
    "你需要对该问题的回答打分。分为两项，第一项是回答的正确性，即回答对解决问题是否有帮助，"
    "分数区间为0到1。第二项是回答是否遵循示例回答的格式规范，分数区间为0到1，0表示完全没有遵循，"
    "1表示完全遵循。以下是你需要打分的样本：\n"
    "{{record_json}}\n"
    "请先进行详细分析，最后将你的打分组织成以下格式：\n"
    "{'回答的正确性': 第一项分数, '回答的格式规范': 第二项分数}";

inline constexpr const char* kJudgeEnBody =
    "Please rate the answer to a question. I will first provide a pair of example questions "
    "and answers, then present the question to be rated. You need to score the answer to this "
    "question. There are two criteria: the first is the correctness of the answer, i.e., "
    "whether the answer is helpful in solving the problem, with a score range from 0 to 1. "
    "The second criterion is whether the answer follows the format standards of the example "
    "answers, with a score range from 0 to 1, where 0 indicates no adherence and 1 indicates "
    "full adherence. Below is the sample you need to rate:\n"
    "{{record_json}}\n"
    "Please conduct a detailed analysis first, and then organize your scoring in the "
    "following format:\n"
    "{'Helpfulness': first criterion score, 'Format Correctness': second criterion score}";

// Single-call Query Type 1: similar instruct -> free-form detailed answer ->
// restructured final answer.
inline constexpr const char* kSynthType1ZhBody =
    "以下是一对问题和回答。\n"
    "【问题】\n"
    "{{i1}}\n"
    "【回答】\n"
    "{{r1}}\n"
    "\n"
    "请完成以下三个步骤，并严格按照下面的输出格式输出，不要输出任何其他内容：\n"
    "1. 生成一个与【问题】领域相同、内容相似的新问题。\n"
    "2. 在没有任何格式限制的前提下，详细回答这个新问题。\n"
    "3. 将详细回答改写为与【回答】的格式尽量一致的最终回答。\n"
    "\n"
    "输出格式：\n"
    "【I2】\n"
    "新问题\n"
    "【RD】\n"
    "详细回答\n"
    "【R2】\n"
    "最终回答";

// Single-call Query Type 2: two maximally different formats for the same
// instruct, then a similar instruct answered in both formats.
inline constexpr const char* kSynthType2ZhBody =
    "以下是一个问题。\n"
    "【问题】\n"
    "{{i1}}\n"
    "\n"
    "请完成以下步骤，并严格按照下面的输出格式输出，不要输出任何其他内容：\n"
    "1. 设想两种回答格式，使它们在语言结构和篇幅长度上差异尽可能大。\n"
    "2. 分别用这两种格式回答【问题】，得到两个回答。\n"
    "3. 生成一个与【问题】领域相同、内容相似的新问题。\n"
    "4. 分别用同样的两种格式回答这个新问题。\n"
    "\n"
    "输出格式：\n"
    "【R1A】\n"
    "第一种格式的回答\n"
    "【R1B】\n"
    "第二种格式的回答\n"
    "【I2】\n"
    "新问题\n"
    "【R2A】\n"
    "第一种格式的新问题回答\n"
    "【R2B】\n"
    "第二种格式的新问题回答";

// Three-turn Type 1 variant, one step per turn.
inline constexpr const char* kSynthType1Turn1ZhBody =
    "以下是一对问题和回答。\n"
    "【问题】\n"
    "{{i1}}\n"
    "【回答】\n"
    "{{r1}}\n"
    "\n"
    "请生成一个与【问题】领域相同、内容相似的新问题，并严格按照以下格式输出：\n"
    "【I2】\n"
    "新问题";

inline constexpr const char* kSynthType1Turn2ZhBody =
    "请在没有任何格式限制的前提下，详细回答你刚才生成的新问题，并严格按照以下格式输出：\n"
    "【RD】\n"
    "详细回答";

inline constexpr const char* kSynthType1Turn3ZhBody =
    "请将你的详细回答改写为与最初给出的【回答】格式尽量一致的最终回答，并严格按照以下格式输出：\n"
    "【R2】\n"
    "最终回答";

// Corrective re-ask appended after a malformed synthesis reply.
inline constexpr const char* kSynthRetryZhBody =
    "你上一条回复不符合要求：{{problem}}。"
    "请重新输出全部小节，并严格遵循要求的输出格式，不要输出任何其他内容。";

// Corrective re-ask appended after an unparseable judge reply.
inline constexpr const char* kJudgeRetryZhBody =
    "请严格按照以下格式重新输出你的打分，不要输出任何其他内容：\n"
    "{'回答的正确性': 第一项分数, '回答的格式规范': 第二项分数}";

inline constexpr const char* kJudgeRetryEnBody =
    "Please restate your scores strictly in the following format and output nothing else:\n"
    "{'Helpfulness': first criterion score, 'Format Correctness': second criterion score}";

}  // namespace builtin

inline TemplateRegistry TemplateRegistry::with_builtins() {
  TemplateRegistry reg;
  reg.add(make_template("oifc_zh", Language::ZH, builtin::kOifcZhBody));
  reg.add(make_template("oifc_en", Language::EN, builtin::kOifcEnBody));
  reg.add(make_template("judge_zh", Language::ZH, builtin::kJudgeZhBody));
  reg.add(make_template("judge_en", Language::EN, builtin::kJudgeEnBody));
  reg.add(make_template("synth_type1_zh", Language::ZH, builtin::kSynthType1ZhBody));
  reg.add(make_template("synth_type2_zh", Language::ZH, builtin::kSynthType2ZhBody));
  reg.add(make_template("synth_type1_turn1_zh", Language::ZH, builtin::kSynthType1Turn1ZhBody));
  reg.add(make_template("synth_type1_turn2_zh", Language::ZH, builtin::kSynthType1Turn2ZhBody));
  reg.add(make_template("synth_type1_turn3_zh", Language::ZH, builtin::kSynthType1Turn3ZhBody));
  reg.add(make_template("synth_retry_zh", Language::ZH, builtin::kSynthRetryZhBody));
  reg.add(make_template("judge_retry_zh", Language::ZH, builtin::kJudgeRetryZhBody));
  reg.add(make_template("judge_retry_en", Language::EN, builtin::kJudgeRetryEnBody));
  reg.set_defaults("oifc_zh", {{"p", builtin::kOifcZhPreamble}});
  reg.set_defaults("oifc_en", {{"p", builtin::kOifcEnPreamble}});
  return reg;
}

}  // namespace oifc::templates
