// qrlink: run elementary-link scenarios.
//
//   qrlink [global flags] <simulate|sweep|belltest|tomography|compare> scenario.json
//
// Exit codes: 0 ok, 1 other failure, 2 schema or I/O error, 3 physical
// constraint violated, 4 sweep point from a different configuration,
// 5 no delivered pairs.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "commands.h"

int main(int argc, char** argv) {
  using namespace qrlink::cli;
  CLI::App app{"Multiplexed quantum-repeater elementary-link simulator"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  std::uint64_t seed = 0;
  std::uint64_t frames = 0;
  std::string out_dir;
  auto* seed_opt = app.add_option("--seed", seed, "Override the scenario seed");
  auto* frames_opt = app.add_option("--frames", frames, "Override the frame count (and frames per sweep point)");
  auto* out_opt = app.add_option("--out-dir", out_dir, "Output directory (default: $QRLINK_OUT_DIR or ./qrlink-out)");
  app.add_option("--threads", g.threads, "Worker threads for sweep points")->check(CLI::PositiveNumber);
  app.add_option("--override", g.overrides, "Set a scenario value, e.g. protocol.coincidence_window_ns=30");
  app.add_flag("--wall-clock", g.wall_clock, "Stamp manifests with the current time");
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress output");

  std::string path;
  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const std::string&, const GlobalOptions&);
  };
  const Sub subs[] = {
      {"simulate", "Run frames and write event, herald and delivery logs", cmd_simulate},
      {"sweep", "Pump power x coincidence window grid", cmd_sweep},
      {"belltest", "CHSH campaign on delivered pairs", cmd_belltest},
      {"tomography", "Nine-setting tomography of delivered pairs", cmd_tomography},
      {"compare", "SPI versus TPI heralding and phase sensitivity", cmd_compare},
  };
  for (const auto& s : subs) {
    app.add_subcommand(s.name, s.help)->add_option("scenario", path, "Scenario JSON file")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kSchema;
  }
  if (*seed_opt) g.seed = seed;
  if (*frames_opt) g.frames = frames;
  if (*out_opt) g.out_dir = out_dir;

  for (const auto& s : subs) {
    if (app.got_subcommand(s.name)) return guarded(s.name, s.fn, path, g);
  }
  return kOther;
}
