#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "oifc/templates.hpp"
#include "support/fixtures.hpp"

using namespace oifc::templates;
namespace fs = std::filesystem;

TEST_CASE("render substitutes placeholders verbatim") {
  TemplateRegistry reg;
  reg.add(make_template("t", Language::EN, "{{x}}"));
  CHECK(render(reg, "t", {{"x", "a"}}) == "a");

  reg.add(make_template("r", Language::EN, "A{{x}}B{{x}}"));
  CHECK(render(reg, "r", {{"x", "-"}}) == "A-B-");
}

TEST_CASE("render is identity on placeholder-free bodies") {
  TemplateRegistry reg;
  const std::string bodies[] = {"", "plain text", "{'a': 1}", "单括号 {x} 不展开",
                                "almost {{ but not", "{{Bad-Name}}"};
  for (const auto& body : bodies) {
    reg.add(make_template("b", Language::ZH, body));
    CHECK(render(reg, "b", {}) == body);
  }
}

TEST_CASE("render leaves no placeholder and ignores extraneous bindings") {
  TemplateRegistry reg;
  reg.add(make_template("t", Language::EN, "{{a}}/{{b}}"));
  std::string out = render(reg, "t", {{"a", "1"}, {"b", "2"}, {"unused", "zzz"}});
  CHECK(out == "1/2");
  CHECK(out.find("{{") == std::string::npos);
}

TEST_CASE("render errors") {
  TemplateRegistry reg = TemplateRegistry::with_builtins();
  CHECK_THROWS_AS(render(reg, "no_such_template", {}), UnknownTemplate);
  reg.add(make_template("t", Language::EN, "{{a}}"));
  CHECK_THROWS_AS(render(reg, "t", {{"b", "x"}}), UnboundVariable);
}

TEST_CASE("nested braces around a valid placeholder") {
  TemplateRegistry reg;
  reg.add(make_template("t", Language::EN, "{{{x}}}"));
  CHECK(render(reg, "t", {{"x", "v"}}) == "{v}");
}

TEST_CASE("render is deterministic") {
  auto reg = TemplateRegistry::with_builtins();
  std::map<std::string, std::string> bindings{
      {"p", "前言"}, {"q_one_shot", "问"}, {"r_one_shot", "答"}, {"x", "新问"}};
  CHECK(render(reg, "oifc_zh", bindings) == render(reg, "oifc_zh", bindings));
}

TEST_CASE("lint accepts all built-ins") {
  auto reg = TemplateRegistry::with_builtins();
  for (const auto& id : reg.ids()) {
    CHECK(lint_template(reg.get(id)).empty());
  }
}

TEST_CASE("lint flags malformed and undeclared placeholders") {
  Template bad = make_template("bad", Language::EN, "{{Bad-Name}}");
  auto findings = lint_template(bad);
  REQUIRE(findings.size() == 1);
  CHECK(findings[0].code == "MALFORMED_PLACEHOLDER");

  Template undeclared;
  undeclared.id = "u";
  undeclared.body = "{{a}}{{b}}";
  undeclared.required_vars = {"a"};
  findings = lint_template(undeclared);
  REQUIRE(findings.size() == 1);
  CHECK(findings[0].code == "UNDECLARED_PLACEHOLDER");
  CHECK(findings[0].detail == "b");

  Template unused;
  unused.id = "w";
  unused.body = "{{a}}";
  unused.required_vars = {"a", "c"};
  findings = lint_template(unused);
  REQUIRE(findings.size() == 1);
  CHECK(findings[0].code == "UNUSED_VARIABLE");
  CHECK(findings[0].detail == "c");
}

TEST_CASE("built-in ids are always present") {
  auto reg = TemplateRegistry::with_builtins();
  for (const char* id : {"oifc_zh", "oifc_en", "synth_type1_zh", "synth_type2_zh",
                         "judge_zh", "judge_en"}) {
    CHECK(reg.contains(id));
  }
}

TEST_CASE("required_vars matches placeholders in body") {
  auto reg = TemplateRegistry::with_builtins();
  for (const auto& id : reg.ids()) {
    const Template& t = reg.get(id);
    CHECK(t.required_vars == placeholders_in(t.body));
  }
  CHECK(reg.get("oifc_zh").required_vars ==
        std::set<std::string>{"p", "q_one_shot", "r_one_shot", "x"});
  CHECK(reg.get("judge_zh").required_vars == std::set<std::string>{"record_json"});
}

TEST_CASE("golden: oifc_zh reproduces the tunnel/bridge prompt byte-for-byte") {
  auto reg = TemplateRegistry::with_builtins();
  auto s = oifc_test::tunnel_example_zh();
  std::map<std::string, std::string> bindings{{"p", builtin::kOifcZhPreamble},
                                              {"q_one_shot", *s.one_shot_query},
                                              {"r_one_shot", s.one_shot_response},
                                              {"x", s.query}};
  std::string expected = oifc_test::read_file(oifc_test::test_dir() + "/golden/oifc_zh_tunnel.txt");
  REQUIRE(!expected.empty());
  CHECK(render(reg, "oifc_zh", bindings) == expected);
}

TEST_CASE("golden: oifc_en reproduces the translated prompt byte-for-byte") {
  auto reg = TemplateRegistry::with_builtins();
  auto s = oifc_test::tunnel_example_en();
  std::map<std::string, std::string> bindings{{"p", builtin::kOifcEnPreamble},
                                              {"q_one_shot", *s.one_shot_query},
                                              {"r_one_shot", s.one_shot_response},
                                              {"x", s.query}};
  std::string expected = oifc_test::read_file(oifc_test::test_dir() + "/golden/oifc_en_tunnel.txt");
  REQUIRE(!expected.empty());
  CHECK(render(reg, "oifc_en", bindings) == expected);
}

TEST_CASE("golden: judge templates reproduce the reference prompt with the slot text") {
  auto reg = TemplateRegistry::with_builtins();
  std::string zh = render(reg, "judge_zh",
                          {{"record_json", "<json格式的问题、one-shot样例、标准答案、模型答案>"}});
  std::string expected_zh =
      oifc_test::read_file(oifc_test::test_dir() + "/golden/judge_zh_reference.txt");
  REQUIRE(!expected_zh.empty());
  CHECK(zh == expected_zh);

  std::string en = render(
      reg, "judge_en",
      {{"record_json", "<json format of the question, one-shot example, standard answer, model answer>"}});
  std::string expected_en =
      oifc_test::read_file(oifc_test::test_dir() + "/golden/judge_en_reference.txt");
  REQUIRE(!expected_en.empty());
  CHECK(en == expected_en);
}

TEST_CASE("judge_zh renders the scoring prompt around the record slot") {
  auto reg = TemplateRegistry::with_builtins();
  std::string out = render(reg, "judge_zh", {{"record_json", "{\"k\": \"v\"}"}});
  CHECK(out.find("请你需要为一个问题的回答打分") == 0);
  CHECK(out.find("{\"k\": \"v\"}") != std::string::npos);
  std::string closing = "{'回答的正确性': 第一项分数, '回答的格式规范': 第二项分数}";
  CHECK(out.substr(out.size() - closing.size()) == closing);
}

TEST_CASE("directory load overrides bodies but keeps registry defaults") {
  fs::path dir = fs::temp_directory_path() / "oifc_tmpl_test";
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "oifc_zh.zh.tmpl", std::ios::binary);
    out << "{{p}}|{{r_one_shot}}|{{x}}\n";  // trailing newline must be stripped
  }
  {
    std::ofstream out(dir / "extra.en.tmpl", std::ios::binary);
    out << "hello {{name}}";
  }
  auto reg = TemplateRegistry::with_builtins();
  reg.load_directory(dir);
  CHECK(render(reg, "oifc_zh", {{"p", "P"}, {"r_one_shot", "R"}, {"x", "X"}}) == "P|R|X");
  CHECK(reg.defaults_for("oifc_zh") != nullptr);  // defaults survive override
  CHECK(render(reg, "extra", {{"name", "world"}}) == "hello world");
  CHECK(reg.get("extra").language == Language::EN);
  fs::remove_all(dir);
}

TEST_CASE("property: render o extract round-trip for random binding values") {
  TemplateRegistry reg;
  reg.add(make_template("t", Language::ZH, "head {{a}} mid {{b}} tail"));
  std::mt19937_64 rng(7);
  const std::string pool[] = {"值", "line1\nline2", "  spaced  ", "a{b}c", "1234", "（全角）"};
  for (int i = 0; i < 50; ++i) {
    std::string a = pool[rng() % 6];
    std::string b = pool[rng() % 6];
    std::string out = render(reg, "t", {{"a", a}, {"b", b}});
    CHECK(out == "head " + a + " mid " + b + " tail");
  }
}
