#pragma once

// Shared test fixtures: the tunnel/bridge example sample in both languages
// and small helpers for reading golden files.

#include <fstream>
#include <sstream>
#include <string>

#include "oifc/core.hpp"

namespace oifc_test {

inline oifc::OifcSample tunnel_example_zh() {
  oifc::OifcSample s;
  s.id = "tunnel-zh";
  s.one_shot_query =
      "一列火车长200米，它以每秒10米的速度穿过200米长的隧道，"
      "从车头进入隧道到车尾离开隧道共需要多少秒?";
  s.one_shot_response = "400÷10=40秒\n共需要40秒。";
  s.query =
      "一辆汽车长150米，它以每秒20米的速度穿过100米长的桥梁，"
      "从车头进入桥梁到车尾离开桥梁共需要多少秒?";
  s.gold_response = "250÷20=12.5秒\n共需要12.5秒。";
  s.split = oifc::Split::TEST_ID;
  s.source = oifc::Source::ol_cc();
  s.provenance = oifc::Provenance::IMPORTED;
  return s;
}

inline oifc::OifcSample tunnel_example_en() {
  oifc::OifcSample s;
  s.id = "tunnel-en";
  s.one_shot_query =
      "A train is 200 meters long and moving at a speed of 10 meters per second. "
      "The train enters a 200-meter-long tunnel from the front, and it takes some "
      "time for the entire train to exit the tunnel from the back. How many seconds "
      "does it take for the train to completely pass through the tunnel?";
  s.one_shot_response = "400 / 10 = 40 seconds.\nThe answer is 40 seconds.";
  s.query =
      "A car is 150 meters long and is traveling at a speed of 20 meters per second "
      "across a bridge that is 100 meters long. How many seconds does it take for the "
      "car to pass completely through the bridge from the front entering to the rear "
      "exiting?";
  s.gold_response = "250 / 20 = 12.5 seconds.\nThe answer is 12.5 seconds.";
  s.split = oifc::Split::TEST_ID;
  s.source = oifc::Source::sharegpt();
  s.provenance = oifc::Provenance::IMPORTED;
  return s;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline std::string test_dir() { return OIFC_TEST_DIR; }

}  // namespace oifc_test
