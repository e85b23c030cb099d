#include "commands.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <mutex>

#include "qrlink/analysis.h"
#include "qrlink/errors.h"
#include "qrlink/exports.h"
#include "qrlink/linksim.h"
#include "qrlink/scenario.h"

namespace qrlink::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using scenario::Scenario;

namespace {

struct Context {
  Scenario sc;
  fs::path out;
  std::string hash;
  std::string started;
  const GlobalOptions* g = nullptr;

  void say(const std::string& line) const {
    if (!g->quiet) std::cout << line << "\n";
  }
};

fs::path resolve_out_dir(const Scenario& sc, const GlobalOptions& g) {
  if (g.out_dir) return *g.out_dir;
  if (sc.output_dir) return *sc.output_dir;
  if (const char* env = std::getenv("QRLINK_OUT_DIR"); env && *env) return env;
  return "qrlink-out";
}

Context prepare(const std::string& path, const GlobalOptions& g) {
  Context c;
  c.g = &g;
  c.started = exports::timestamp(g.wall_clock);
  c.sc = scenario::load_scenario(path, g.overrides);
  if (g.seed) c.sc.link.seed = *g.seed;
  if (g.frames) {
    c.sc.frames = *g.frames;
    if (c.sc.sweep) c.sc.sweep->frames_per_point = *g.frames;
  }
  c.sc.validate();
  c.out = resolve_out_dir(c.sc, g);
  fs::create_directories(c.out);
  c.hash = scenario::config_hash(c.sc);
  return c;
}

void finish(const Context& c, const std::string& command, std::vector<std::string> outputs) {
  exports::ManifestInfo m;
  m.command = command;
  m.config_hash = c.hash;
  m.seed = c.sc.link.seed;
  m.frames = c.sc.frames;
  m.started_at = c.started;
  m.finished_at = exports::timestamp(c.g->wall_clock);
  m.outputs = std::move(outputs);
  exports::write_manifest(c.out, m);
}

void write_json(const fs::path& path, const json& j) { exports::write_file_atomic(path, j.dump(2) + "\n"); }

json header_json(const Context& c, const char* command) {
  return {{"command", command},
          {"scenario", c.sc.name},
          {"config_hash", c.hash},
          {"seed", c.sc.link.seed},
          {"frames", c.sc.frames}};
}

double num_or_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

analysis::RatePoint rate_point_from_json(const json& j) {
  analysis::RatePoint p;
  p.power_mw = j.at("power_mw").get<double>();
  p.window_ns = j.at("window_ns").get<double>();
  p.herald_hz = j.at("herald_hz").get<double>();
  p.analyzed_hz = j.at("analyzed_hz").get<double>();
  p.edr_hz = j.at("edr_hz").get<double>();
  p.realized_edr_hz = j.at("realized_edr_hz").get<double>();
  p.delivered_pairs = j.at("delivered_pairs").get<std::uint64_t>();
  p.has_state = j.at("has_state").get<bool>();
  p.fidelity = num_or_nan(j.at("fidelity"));
  p.fidelity_err = num_or_nan(j.at("fidelity_err"));
  p.chsh = num_or_nan(j.at("chsh"));
  p.chsh_err = num_or_nan(j.at("chsh_err"));
  p.sig_sigma = num_or_nan(j.at("sig_sigma"));
  p.exact_fidelity = num_or_nan(j.at("exact_fidelity"));
  p.exact_chsh = num_or_nan(j.at("exact_chsh"));
  return p;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

int cmd_simulate(const std::string& path, const GlobalOptions& g) {
  Context c = prepare(path, g);
  const auto& link = c.sc.link;
  json summary = header_json(c, "simulate");

  if (link.protocol.mode == linksim::HeraldMode::SPI) {
    const auto spi = linksim::spi_heralding(link, c.sc.frames);
    summary["mode"] = "spi";
    summary["spi"] = {{"heralds", spi.heralds},
                      {"wall_time_s", spi.wall_time_s},
                      {"herald_rate_hz", spi.herald_rate_hz()},
                      {"delta_phi_rad", spi.delta_phi_rad}};
    write_json(c.out / "summary.json", summary);
    finish(c, "simulate", {"summary.json"});
    c.say("spi herald rate " + sci(spi.herald_rate_hz()) + " Hz, delta_phi " + fixed(spi.delta_phi_rad, 6) + " rad");
    return kOk;
  }

  exports::RunLog log;
  const auto run = linksim::run_link(link, c.sc.frames, log.observer(c.sc.analysis.log_frames));
  const auto res = analysis::evaluate_point(link, run, {c.sc.analysis.samples_per_setting});
  const auto proj = analysis::multiplexing_projection(res.point, c.sc.analysis.usable_modes);

  summary["mode"] = link.protocol.memory_bypass ? "tpi_bypass" : "tpi";
  summary["run"] = exports::run_summary_json(run);
  summary["rate_point"] = exports::rate_point_json(res.point);
  summary["tallies"] = exports::tally_json(res.tallies);
  if (res.state) summary["state"] = res.state->serialize();
  json mp = {{"cap_hz", proj.cap_hz}, {"joint_efficiency", proj.joint_efficiency}, {"points", json::array()}};
  for (std::size_t i = 0; i < proj.usable_modes.size(); ++i) {
    mp["points"].push_back({{"usable_modes", proj.usable_modes[i]}, {"edr_hz", proj.edr_hz[i]}});
  }
  summary["multiplexing"] = mp;

  exports::write_file_atomic(c.out / "events.csv", log.events_csv());
  exports::write_file_atomic(c.out / "heralds.csv", log.heralds_csv());
  exports::write_file_atomic(c.out / "delivered.csv", log.delivered_csv());
  write_json(c.out / "summary.json", summary);
  finish(c, "simulate", {"events.csv", "heralds.csv", "delivered.csv", "summary.json"});

  const auto& p = res.point;
  c.say("herald rate " + sci(p.herald_hz) + " Hz, analyzed " + sci(p.analyzed_hz) + " Hz, EDR " + sci(p.edr_hz) +
        " Hz");
  if (p.has_state) {
    c.say("fidelity " + fixed(p.fidelity, 4) + " +- " + fixed(p.fidelity_err, 4) + ", CHSH " + fixed(p.chsh, 4) +
          " +- " + fixed(p.chsh_err, 4));
  } else {
    c.say("no delivered pairs");
  }
  return kOk;
}

int cmd_sweep(const std::string& path, const GlobalOptions& g) {
  Context c = prepare(path, g);
  if (!c.sc.sweep) throw scenario::SchemaError("scenario has no sweep section", 0);
  const auto& spec = *c.sc.sweep;
  const analysis::CampaignOptions campaign{c.sc.analysis.samples_per_setting};
  const fs::path points_dir = c.out / "points";
  fs::create_directories(points_dir);

  std::vector<std::string> hashes(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) {
    Scenario ps = c.sc;
    ps.link = analysis::point_config(c.sc.link, spec, i);
    ps.frames = spec.frames_per_point;
    ps.sweep.reset();
    ps.output_dir.reset();
    hashes[i] = scenario::config_hash(ps);
  }
  auto point_file = [&](std::size_t i) { return points_dir / ("point_" + std::to_string(i) + ".json"); };

  // Check every existing point before computing anything.
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (!fs::exists(point_file(i))) continue;
    json j;
    try {
      j = json::parse(exports::read_file(point_file(i)));
    } catch (const json::exception&) {
      throw HashMismatch(point_file(i).string() + " is unreadable");
    }
    if (!j.contains("hash") || j.at("hash") != hashes[i]) {
      throw HashMismatch(point_file(i).string() + " was produced by a different configuration");
    }
  }

  std::mutex mu;
  std::size_t done = 0;
  analysis::SweepHooks hooks;
  hooks.cached = [&](std::size_t i) -> std::optional<analysis::RatePoint> {
    if (!fs::exists(point_file(i))) return std::nullopt;
    return rate_point_from_json(json::parse(exports::read_file(point_file(i))).at("point"));
  };
  hooks.on_point = [&](std::size_t i, const analysis::RatePoint& p) {
    write_json(point_file(i), {{"hash", hashes[i]}, {"index", i}, {"point", exports::rate_point_json(p)}});
    std::lock_guard<std::mutex> lk(mu);
    ++done;
    c.say("point " + std::to_string(i + 1) + "/" + std::to_string(spec.size()) + " done");
  };
  const auto grid = analysis::sweep(spec, c.sc.link, campaign, g.threads, hooks);

  std::string csv = exports::sweep_csv_header();
  json points = json::array();
  for (const auto& p : grid) {
    csv += exports::sweep_csv_row(p);
    points.push_back(exports::rate_point_json(p));
  }
  exports::write_file_atomic(c.out / "sweep.csv", csv);
  json summary = header_json(c, "sweep");
  summary["frames_per_point"] = spec.frames_per_point;
  summary["points"] = points;
  write_json(c.out / "sweep.json", summary);
  finish(c, "sweep", {"sweep.csv", "sweep.json"});
  c.say("wrote " + std::to_string(grid.size()) + " rows to " + (c.out / "sweep.csv").string());
  return kOk;
}

int cmd_belltest(const std::string& path, const GlobalOptions& g) {
  Context c = prepare(path, g);
  json report = header_json(c, "belltest");
  std::optional<qstate::DensityMatrix> rho;
  if (c.sc.debug_source) {
    rho = c.sc.debug_source->state();
    report["source"] = "debug";
  } else {
    const auto run = linksim::run_link(c.sc.link, c.sc.frames);
    report["source"] = "simulated";
    report["run"] = exports::run_summary_json(run);
    if (!run.ensembles[0].empty()) rho = run.ensembles[0].state();
  }
  if (!rho) throw NoDeliveredPairs("no delivered pairs in " + std::to_string(c.sc.frames) + " frames");
  const auto settings = analysis::chsh_settings();
  const auto tallies = analysis::measure_settings(*rho, settings, c.sc.analysis.samples_per_setting, c.sc.link.seed);
  const auto s = analysis::estimate_chsh(tallies);
  report["samples_per_setting"] = c.sc.analysis.samples_per_setting;
  report["chsh"] = s.value;
  report["chsh_err"] = s.err;
  report["significance_sigma"] = exports::finite_or_null(s.significance);
  report["violation"] = s.value > 2.0;
  report["exact_chsh"] = qstate::chsh_value(*rho, qstate::standard_chsh_settings());
  report["tallies"] = exports::tally_json(tallies);
  write_json(c.out / "belltest.json", report);
  finish(c, "belltest", {"belltest.json"});
  c.say("S = " + fixed(s.value, 4) + " +- " + fixed(s.err, 4) + " (" + fixed(s.significance, 2) + " sigma)");
  return kOk;
}

int cmd_tomography(const std::string& path, const GlobalOptions& g) {
  Context c = prepare(path, g);
  json report = header_json(c, "tomography");
  std::vector<std::pair<std::string, qstate::DensityMatrix>> subsets;
  if (c.sc.debug_source) {
    report["source"] = "debug";
    subsets.emplace_back(qstate::to_string(c.sc.debug_source->bell), c.sc.debug_source->state());
  } else {
    const auto run = linksim::run_link(c.sc.link, c.sc.frames);
    report["source"] = "simulated";
    report["run"] = exports::run_summary_json(run);
    for (int k = 0; k < 2; ++k) {
      if (!run.ensembles[k].empty()) {
        subsets.emplace_back(k == 0 ? "psi+" : "psi-", run.ensembles[k].state());
      }
    }
  }
  if (subsets.empty()) throw NoDeliveredPairs("no delivered pairs in " + std::to_string(c.sc.frames) + " frames");
  std::vector<std::string> outputs;
  report["subsets"] = json::array();
  for (const auto& [name, rho] : subsets) {
    const auto r = analysis::run_tomography(rho, c.sc.analysis.samples_per_setting, c.sc.link.seed);
    const std::string file = std::string("tomography_") + (name == "psi+" ? "psi_plus" : "psi_minus") + ".dm";
    exports::write_file_atomic(c.out / file, r.state.serialize());
    outputs.push_back(file);
    const auto target = name == "psi+" ? qstate::BellKind::PsiPlus : qstate::BellKind::PsiMinus;
    report["subsets"].push_back({{"parity", name},
                                 {"matrix_file", file},
                                 {"fidelity_psi_plus", r.fidelity_plus},
                                 {"fidelity_psi_minus", r.fidelity_minus},
                                 {"fidelity_to_heralded", qstate::fidelity_to_bell(r.state, target)},
                                 {"exact_fidelity_to_heralded", qstate::fidelity_to_bell(rho, target)},
                                 {"tallies", exports::tally_json(r.tallies)}});
    c.say(name + ": reconstructed fidelity " + fixed(qstate::fidelity_to_bell(r.state, target), 4));
  }
  report["samples_per_setting"] = c.sc.analysis.samples_per_setting;
  write_json(c.out / "tomography.json", report);
  outputs.push_back("tomography.json");
  finish(c, "tomography", outputs);
  return kOk;
}

int cmd_compare(const std::string& path, const GlobalOptions& g) {
  Context c = prepare(path, g);
  const auto r = analysis::spi_tpi_compare(c.sc.link, c.sc.frames, c.sc.analysis.phase_offsets_rad,
                                           c.sc.analysis.phase_frames);
  json report = header_json(c, "compare");
  report["click_rate_hz"] = r.click_rate_hz;
  report["spi_herald_rate_hz"] = r.spi_herald_rate_hz;
  report["tpi_herald_rate_hz"] = r.tpi_herald_rate_hz;
  report["ratio"] = r.ratio;
  report["tpi_phase_invariant"] = r.tpi_phase_invariant;
  report["phase_frames"] = c.sc.analysis.phase_frames;
  std::string csv = "offset_rad,spi_delta_phi_rad,spi_fidelity,tpi_fidelity\n";
  for (const auto& row : r.phase_curve) {
    csv += exports::fmt_exact(row.offset_rad) + "," + exports::fmt_exact(row.spi_delta_phi_rad) + "," +
           exports::fmt_exact(row.spi_fidelity) + "," + exports::fmt_exact(row.tpi_fidelity) + "\n";
  }
  exports::write_file_atomic(c.out / "phase_sweep.csv", csv);
  write_json(c.out / "compare.json", report);
  finish(c, "compare", {"compare.json", "phase_sweep.csv"});
  c.say("TPI/SPI herald ratio " + fixed(r.ratio, 4) + " (TPI " + sci(r.tpi_herald_rate_hz) + " Hz, SPI " +
        sci(r.spi_herald_rate_hz) + " Hz)");
  return kOk;
}

int guarded(const char* command, int (*fn)(const std::string&, const GlobalOptions&), const std::string& path,
            const GlobalOptions& g) {
  try {
    return fn(path, g);
  } catch (const scenario::SchemaError& e) {
    std::cerr << "qrlink " << command << ": " << path << ": " << e.what() << "\n";
    return kSchema;
  } catch (const ConfigError& e) {
    std::cerr << "qrlink " << command << ": physical constraint violated: " << e.what() << "\n";
    return kPhysical;
  } catch (const HashMismatch& e) {
    std::cerr << "qrlink " << command << ": " << e.what() << "\n";
    return kSweepHashMismatch;
  } catch (const NoDeliveredPairs& e) {
    std::cerr << "qrlink " << command << ": " << e.what()
              << "; increase --frames or check losses and the delay filter\n";
    return kNoDeliveredPairs;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "qrlink " << command << ": " << e.what() << "\n";
    return kSchema;
  } catch (const std::exception& e) {
    std::cerr << "qrlink " << command << ": " << e.what() << "\n";
    return kOther;
  }
}

}  // namespace qrlink::cli
