#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "helpers.h"
#include "json.hpp"
#include "qrlink/exports.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kScratch = fs::temp_directory_path() / "qrlink_cli_test";

std::string scenario(const std::string& name) { return (fs::path(QRLINK_SCENARIO_DIR) / name).string(); }

// Runs the cli and returns its exit status.
int run(const std::string& args) {
  fs::create_directories(kScratch);
  const std::string cmd = std::string(QRLINK_CLI_PATH) + " -q " + args + " > " + (kScratch / "log.txt").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

fs::path fresh(const std::string& name) {
  const fs::path p = kScratch / name;
  fs::remove_all(p);
  return p;
}

std::string write_doc(const std::string& name, const std::string& text) {
  fs::create_directories(kScratch);
  const fs::path p = kScratch / name;
  qrlink::exports::write_file_atomic(p, text);
  return p.string();
}

json load(const fs::path& p) { return json::parse(qrlink::exports::read_file(p)); }

std::string log_text() { return qrlink::exports::read_file(kScratch / "log.txt"); }

}  // namespace

TEST_CASE("missing scenario file is exit 2") {
  CHECK(run("--out-dir " + fresh("missing").string() + " simulate /nonexistent/nothing.json") == 2);
}

TEST_CASE("schema errors are exit 2 with a line number") {
  const auto doc = write_doc("bad_schema.json", "{\n  \"frames\": 10,\n  \"colour\": \"red\"\n}\n");
  CHECK(run("--out-dir " + fresh("bad").string() + " simulate " + doc) == 2);
  CHECK(log_text().find("line 3") != std::string::npos);
  CHECK(run("simulate") == 2);
  CHECK(run("--override nonsense.key=1 simulate " + scenario("noiseless.json")) == 2);
}

TEST_CASE("storage shorter than the round trip is exit 3") {
  CHECK(run("--out-dir " + fresh("storage").string() + " --override memory_a.storage_time_us=50 simulate " +
            scenario("noiseless.json")) == 3);
}

TEST_CASE("no delivered pairs is exit 5") {
  const std::string over = " --override source_a.pump_power_mw=0 --override source_b.pump_power_mw=0";
  CHECK(run("--out-dir " + fresh("empty").string() + " --frames 5" + over + " belltest " +
            scenario("noiseless.json")) == 5);
  CHECK(run("--out-dir " + fresh("empty_tomo").string() + " --frames 5" + over + " tomography " +
            scenario("noiseless.json")) == 5);
}

TEST_CASE("simulate is reproducible byte for byte") {
  const auto a = fresh("sim_a");
  const auto b = fresh("sim_b");
  REQUIRE(run("--seed 7 --frames 3000 --out-dir " + a.string() + " simulate " + scenario("noiseless.json")) == 0);
  REQUIRE(run("--seed 7 --frames 3000 --out-dir " + b.string() + " simulate " + scenario("noiseless.json")) == 0);
  for (const char* f : {"manifest.json", "events.csv", "heralds.csv", "delivered.csv", "summary.json"}) {
    INFO(f);
    REQUIRE(fs::exists(a / f));
    CHECK(qrlink::exports::read_file(a / f) == qrlink::exports::read_file(b / f));
  }
  const auto m = load(a / "manifest.json");
  CHECK(m.at("seed") == 7);
  CHECK(m.at("frames") == 3000);
  CHECK(m.at("outputs").size() == 4);
  CHECK(m.at("config_hash").get<std::string>().size() == 64);

  const auto c = fresh("sim_c");
  REQUIRE(run("--seed 8 --frames 3000 --out-dir " + c.string() + " simulate " + scenario("noiseless.json")) == 0);
  CHECK(qrlink::exports::read_file(a / "heralds.csv") != qrlink::exports::read_file(c / "heralds.csv"));
}

TEST_CASE("sweep writes the grid, reruns identically and resumes") {
  const std::string args = " --frames 2000 --override sweep.pump_powers_mw=[0.2,0.4]"
                           " --override sweep.windows_ns=[10,20,30,40,50] sweep " +
                           scenario("noiseless.json");
  const auto dir = fresh("sweep");
  REQUIRE(run("--out-dir " + dir.string() + args) == 0);
  const std::string csv = qrlink::exports::read_file(dir / "sweep.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
  const std::string manifest = qrlink::exports::read_file(dir / "manifest.json");

  REQUIRE(run("--out-dir " + dir.string() + args) == 0);
  CHECK(qrlink::exports::read_file(dir / "sweep.csv") == csv);

  // Simulate an interrupted run.
  fs::remove(dir / "points" / "point_3.json");
  fs::remove(dir / "points" / "point_8.json");
  fs::remove(dir / "sweep.csv");
  REQUIRE(run("--out-dir " + dir.string() + args) == 0);
  CHECK(qrlink::exports::read_file(dir / "sweep.csv") == csv);
  CHECK(qrlink::exports::read_file(dir / "manifest.json") == manifest);

  const auto fresh_dir = fresh("sweep_threads");
  REQUIRE(run("--threads 3 --out-dir " + fresh_dir.string() + args) == 0);
  CHECK(qrlink::exports::read_file(fresh_dir / "sweep.csv") == csv);

  // Points on disk from another seed.
  CHECK(run("--seed 99 --out-dir " + dir.string() + args) == 4);
}

TEST_CASE("debug sources drive belltest and tomography") {
  const auto werner = write_doc("werner.json", R"({
  "debug_source": {"kind": "werner", "p": 0.6},
  "analysis": {"samples_per_setting": 20000}
})");
  const auto dir = fresh("werner");
  REQUIRE(run("--out-dir " + dir.string() + " belltest " + werner) == 0);
  const auto bell = load(dir / "belltest.json");
  CHECK(bell.at("source") == "debug");
  CHECK(bell.at("exact_chsh").get<double>() == doctest::Approx(0.6 * 2.0 * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(bell.at("chsh").get<double>() < 2.0);
  CHECK(bell.at("violation") == false);

  const auto singlet = write_doc("singlet.json", R"({
  "debug_source": {"kind": "bell", "bell": "psi-"},
  "analysis": {"samples_per_setting": 5000}
})");
  const auto tdir = fresh("singlet");
  REQUIRE(run("--out-dir " + tdir.string() + " tomography " + singlet) == 0);
  const auto tomo = load(tdir / "tomography.json");
  REQUIRE(tomo.at("subsets").size() == 1);
  CHECK(tomo.at("subsets")[0].at("exact_fidelity_to_heralded").get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(tomo.at("subsets")[0].at("fidelity_to_heralded").get<double>() > 0.99);
  CHECK(fs::exists(tdir / "tomography_psi_minus.dm"));

  // The standard settings are tuned to psi+.
  const auto triplet = write_doc("triplet.json", R"({"debug_source": {"kind": "bell", "bell": "psi+"}})");
  const auto bdir = fresh("triplet_bell");
  REQUIRE(run("--out-dir " + bdir.string() + " belltest " + triplet) == 0);
  CHECK(load(bdir / "belltest.json").at("chsh").get<double>() > 2.7);
  REQUIRE(run("--out-dir " + bdir.string() + " belltest " + singlet) == 0);
  CHECK(std::abs(load(bdir / "belltest.json").at("chsh").get<double>()) < 0.1);
}

TEST_CASE("compare reports both schemes") {
  const auto dir = fresh("compare");
  REQUIRE(run("--frames 20000 --out-dir " + dir.string() + " compare " + scenario("noiseless.json")) == 0);
  CHECK(fs::exists(dir / "compare.json"));
  CHECK(fs::exists(dir / "phase_sweep.csv"));
  CHECK(fs::exists(dir / "manifest.json"));
}
