#include <doctest.h>

#include <random>

#include "oifc/core.hpp"
#include "support/fixtures.hpp"

using namespace oifc;

namespace {

OifcSample minimal_sample() {
  OifcSample s;
  s.id = "s1";
  s.one_shot_response = "示例回答";
  s.query = "问题";
  s.gold_response = "答案";
  s.source = Source::belle2();
  return s;
}

}  // namespace

TEST_CASE("validate_sample: fully populated sample passes") {
  CHECK(validate_sample(oifc_test::tunnel_example_zh()).ok());
  CHECK(validate_sample(minimal_sample()).ok());
}

TEST_CASE("validate_sample: single-field corruptions flag exactly one violation") {
  struct Case {
    const char* code;
    void (*corrupt)(OifcSample&);
  };
  const Case cases[] = {
      {"EMPTY_ONESHOT_RESPONSE", [](OifcSample& s) { s.one_shot_response = "  \n "; }},
      {"EMPTY_QUERY", [](OifcSample& s) { s.query = ""; }},
      {"EMPTY_GOLD", [](OifcSample& s) { s.gold_response = ""; }},
      {"EMPTY_PREAMBLE", [](OifcSample& s) { s.preamble = ""; }},
      {"EMPTY_ONESHOT_QUERY", [](OifcSample& s) { s.one_shot_query = " "; }},
      {"QUERY_EQUALS_ONESHOT", [](OifcSample& s) { s.one_shot_query = s.query; }},
  };
  for (const auto& c : cases) {
    CAPTURE(c.code);
    OifcSample s = minimal_sample();
    c.corrupt(s);
    auto report = validate_sample(s);
    REQUIRE(report.violations.size() == 1);
    CHECK(report.violations[0].code == c.code);
  }
}

TEST_CASE("validate_sample: absent optionals are legal") {
  OifcSample s = minimal_sample();
  s.preamble = std::nullopt;
  s.one_shot_query = std::nullopt;
  CHECK(validate_sample(s).ok());
}

TEST_CASE("validate_dataset: type2 pair invariants") {
  OifcSample a = minimal_sample();
  a.id = "rec-t2-a";
  a.provenance = Provenance::TYPE2_VARIANT_A;
  a.one_shot_response = "- 列表式回答\n- 第二点";
  OifcSample b = a;
  b.id = "rec-t2-b";
  b.provenance = Provenance::TYPE2_VARIANT_B;
  b.one_shot_response = "一句话回答。";

  SUBCASE("well-formed pair passes") {
    auto reports = validate_dataset({a, b});
    CHECK(reports[0].ok());
    CHECK(reports[1].ok());
  }
  SUBCASE("query mismatch is flagged") {
    b.query = "不同的问题";
    auto reports = validate_dataset({a, b});
    REQUIRE(reports[1].violations.size() == 1);
    CHECK(reports[1].violations[0].code == "TYPE2_PAIR_QUERY_MISMATCH");
  }
  SUBCASE("identical one-shot responses are flagged") {
    b.one_shot_response = a.one_shot_response + "  ";  // loose-equal
    auto reports = validate_dataset({a, b});
    REQUIRE(reports[1].violations.size() == 1);
    CHECK(reports[1].violations[0].code == "TYPE2_PAIR_ONESHOT_EQUAL");
  }
}

TEST_CASE("assemble_oifc_prompt: golden zh output with default preamble") {
  auto reg = templates::TemplateRegistry::with_builtins();
  auto s = oifc_test::tunnel_example_zh();
  std::string expected =
      oifc_test::read_file(oifc_test::test_dir() + "/golden/oifc_zh_tunnel.txt");
  REQUIRE(!expected.empty());
  CHECK(assemble_oifc_prompt(s, "oifc_zh", reg) == expected);

  // explicit per-sample preamble equal to the constant gives the same bytes
  s.preamble = templates::builtin::kOifcZhPreamble;
  CHECK(assemble_oifc_prompt(s, "oifc_zh", reg) == expected);
}

TEST_CASE("assemble_oifc_prompt: golden en output") {
  auto reg = templates::TemplateRegistry::with_builtins();
  auto s = oifc_test::tunnel_example_en();
  std::string expected =
      oifc_test::read_file(oifc_test::test_dir() + "/golden/oifc_en_tunnel.txt");
  REQUIRE(!expected.empty());
  CHECK(assemble_oifc_prompt(s, "oifc_en", reg) == expected);
}

TEST_CASE("assemble_oifc_prompt: minimal template with absent optionals") {
  auto reg = templates::TemplateRegistry::with_builtins();
  reg.add(templates::make_template("mini", templates::Language::ZH,
                                   "{{r_one_shot}}\n{{x}}"));
  OifcSample s = minimal_sample();
  s.preamble = std::nullopt;
  s.one_shot_query = std::nullopt;
  CHECK(assemble_oifc_prompt(s, "mini", reg) ==
        s.one_shot_response + "\n" + s.query);
}

TEST_CASE("assemble_oifc_prompt: errors") {
  auto reg = templates::TemplateRegistry::with_builtins();
  OifcSample s = minimal_sample();
  CHECK_THROWS_AS(assemble_oifc_prompt(s, "nope", reg), templates::UnknownTemplate);

  // built-in zh template requires q_one_shot, which the sample lacks
  s.one_shot_query = std::nullopt;
  CHECK_THROWS_AS(assemble_oifc_prompt(s, "oifc_zh", reg), templates::UnboundVariable);

  OifcSample invalid = minimal_sample();
  invalid.gold_response = "";
  CHECK_THROWS_WITH_AS(assemble_oifc_prompt(invalid, "oifc_zh", reg),
                       doctest::Contains("EMPTY_GOLD"), Error);
}

TEST_CASE("assemble_oifc_prompt: determinism and single-occurrence property") {
  auto reg = templates::TemplateRegistry::with_builtins();
  std::mt19937_64 rng(11);
  auto fresh_token = [&](const char* tag) {
    return std::string(tag) + std::to_string(rng()) + "—" + std::to_string(rng());
  };
  for (int i = 0; i < 30; ++i) {
    OifcSample s;
    s.id = "p" + std::to_string(i);
    s.one_shot_query = fresh_token("q");
    s.one_shot_response = fresh_token("r");
    s.query = fresh_token("x");
    s.gold_response = fresh_token("y");
    s.source = Source::cat_ins();
    for (const char* tpl : {"oifc_zh", "oifc_en"}) {
      std::string a = assemble_oifc_prompt(s, tpl, reg);
      std::string b = assemble_oifc_prompt(s, tpl, reg);
      CHECK(a == b);
      // one_shot_response and query appear exactly once
      for (const std::string& needle : {s.one_shot_response, s.query}) {
        std::size_t first = a.find(needle);
        REQUIRE(first != std::string::npos);
        CHECK(a.find(needle, first + 1) == std::string::npos);
      }
      // gold never leaks into the prompt
      CHECK(a.find(s.gold_response) == std::string::npos);
    }
  }
}
