#include <filesystem>

#include "doctest.h"
#include "helpers.h"
#include "qrlink/errors.h"
#include "qrlink/exports.h"
#include "qrlink/scenario.h"

using namespace qrlink;
using namespace qrlink::scenario;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"({
  "name": "t",
  "seed": 5,
  "frames": 10,
  "source_a": {"pump_power_mw": 2.0},
  "detectors": [{"efficiency": 0.5, "dark_rate_hz": 10}, {"efficiency": 0.6, "dark_rate_hz": 20}],
  "protocol": {"coincidence_window_ns": 30}
})";

fs::path scenario_file(const std::string& name) { return fs::path(QRLINK_SCENARIO_DIR) / name; }

}  // namespace

TEST_CASE("minimal document uses defaults") {
  const auto s = parse_scenario(kMinimal);
  CHECK(s.name == "t");
  CHECK(s.link.seed == 5);
  CHECK(s.frames == 10);
  CHECK(s.link.source_a.pump_power_mw == 2.0);
  CHECK(s.link.source_b.pump_power_mw == 3.0);
  CHECK(s.link.protocol.coincidence_window_ns == 30.0);
  CHECK(s.link.protocol.fixed_delay_filter_ns == 500.0);
  CHECK_FALSE(s.sweep.has_value());
}

TEST_CASE("round trip through json is exact") {
  for (const char* name : {"noiseless.json", "calibrated_3mw.json", "calibrated_18mw.json"}) {
    const auto a = load_scenario(scenario_file(name));
    const auto text = to_json(a).dump(2);
    const auto b = parse_scenario(text);
    CHECK(canonical_text(a) == canonical_text(b));
    CHECK(config_hash(a) == config_hash(b));
    CHECK(to_json(b) == to_json(a));
  }
  const auto s = parse_scenario(kMinimal);
  CHECK(canonical_text(parse_scenario(canonical_text(s))) == canonical_text(s));
}

TEST_CASE("shipped scenarios validate") {
  for (const char* name : {"noiseless.json", "calibrated_3mw.json", "calibrated_18mw.json",
                           "calibrated_bypass_3mw.json"}) {
    INFO(name);
    const auto s = load_scenario(scenario_file(name));
    CHECK_NOTHROW(s.validate());
  }
  const auto cal = load_scenario(scenario_file("calibrated_3mw.json"));
  CHECK_FALSE(cal.fitted.empty());
  CHECK(load_scenario(scenario_file("calibrated_18mw.json")).link.source_a.pump_power_mw == 18.0);
  CHECK(load_scenario(scenario_file("calibrated_18mw.json")).link.protocol.coincidence_window_ns == 40.0);
}

TEST_CASE("unknown keys are rejected with their line") {
  const char* doc = "{\n  \"name\": \"x\",\n  \"source_a\": {\n    \"pump_power\": 3\n  }\n}";
  try {
    parse_scenario(doc);
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(e.line() == 4);
    CHECK(std::string(e.what()).find("pump_power") != std::string::npos);
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_scenario("{\"bogus\": 1}"), SchemaError);
}

TEST_CASE("type errors and syntax errors") {
  try {
    parse_scenario("{\n\"frames\": \"many\"\n}");
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(e.line() == 2);
  }
  try {
    parse_scenario("{\n\"frames\": 3,\n\"seed\": }");
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(parse_scenario("[1, 2]"), SchemaError);
  CHECK_THROWS_AS(parse_scenario(R"({"detectors": [{"efficiency": 0.5}]})"), SchemaError);
  CHECK_THROWS_AS(parse_scenario(R"({"protocol": {"mode": "xyz"}})"), SchemaError);
  CHECK_THROWS_AS(load_scenario("/nonexistent/file.json"), SchemaError);
}

TEST_CASE("physical constraints are config errors, not schema errors") {
  const auto bad = parse_scenario(R"({"channel_b": {"length_km": 9.9}, "memory_a": {"storage_time_us": 50}})");
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  const auto prob = parse_scenario(R"({"detectors": [{"efficiency": 1.5}, {"efficiency": 0.5}]})");
  CHECK_THROWS_AS(prob.validate(), ConfigError);
}

TEST_CASE("overrides") {
  auto s = parse_scenario(kMinimal, {"protocol.coincidence_window_ns=45", "detectors.1.dark_rate_hz=7",
                                     "name=renamed", "protocol.fixed_delay_filter_ns=null",
                                     "sweep.pump_powers_mw=[3,18]", "sweep.windows_ns=[20]"});
  CHECK(s.link.protocol.coincidence_window_ns == 45.0);
  CHECK(s.link.detectors[1].dark_rate_hz == 7.0);
  CHECK(s.name == "renamed");
  CHECK_FALSE(s.link.protocol.fixed_delay_filter_ns.has_value());
  REQUIRE(s.sweep.has_value());
  CHECK(s.sweep->pump_powers_mw.size() == 2);
  CHECK_THROWS_AS(parse_scenario(kMinimal, {"protocol.nonsense=1"}), SchemaError);
  CHECK_THROWS_AS(parse_scenario(kMinimal, {"no_equals_sign"}), SchemaError);
  CHECK_THROWS_AS(parse_scenario(kMinimal, {"detectors.5.efficiency=1"}), SchemaError);
}

TEST_CASE("config hash tracks content") {
  const auto a = parse_scenario(kMinimal);
  const auto b = parse_scenario(kMinimal, {"seed=6"});
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a).size() == 64);
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("csv and json exports") {
  analysis::RatePoint p;
  p.power_mw = 3;
  p.window_ns = 20;
  const std::string header = exports::sweep_csv_header();
  CHECK(header.rfind("power_mw,window_ns,herald_hz,edr_hz,fidelity,fidelity_err,chsh,chsh_err,sig_sigma", 0) == 0);
  CHECK(exports::sweep_csv_row(p).find("nan") != std::string::npos);
  CHECK(exports::finite_or_null(std::nan("")).is_null());
  CHECK(exports::fmt_exact(0.1) == "0.10000000000000001");
  CHECK(exports::fmt_time(1.23456) == "1.235");
  CHECK(exports::tags_string(linksim::kFromA | linksim::kFromB) == "A|B");
  CHECK(exports::tags_string(linksim::kDark) == "dark");
}

TEST_CASE("atomic writes and deterministic timestamps") {
  const fs::path dir = fs::temp_directory_path() / "qrlink_scenario_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  exports::write_file_atomic(dir / "a.txt", "hello");
  CHECK(exports::read_file(dir / "a.txt") == "hello");
  exports::write_file_atomic(dir / "a.txt", "again");
  CHECK(exports::read_file(dir / "a.txt") == "again");
  CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}) == 1);
  CHECK(exports::timestamp(false) == exports::timestamp(false));
  fs::remove_all(dir);
}
