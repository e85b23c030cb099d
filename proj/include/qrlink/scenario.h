#pragma once

// Scenario files: JSON documents holding a LinkConfig plus run, sweep and
// analysis options. Physical quantities carry their unit in the key name.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qrlink/analysis.h"
#include "qrlink/linksim.h"

namespace qrlink::scenario {

// Malformed document: syntax error, unknown key, wrong type, bad override.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(const std::string& what, int line) : std::runtime_error(what), line_(line) {}
  int line() const { return line_; }  // 0 when unknown

 private:
  int line_;
};

struct AnalysisOptions {
  std::uint64_t samples_per_setting = 20000;
  // Frames written to the event and herald logs.
  std::uint64_t log_frames = 10;
  std::vector<double> phase_offsets_rad{0.0, 0.7853981633974483, 1.5707963267948966, 2.356194490192345,
                                        3.141592653589793};
  std::uint64_t phase_frames = 20000;
  std::vector<int> usable_modes{1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 1204};
};

enum class DebugKind { Werner, Bell };

// Replaces the simulated delivered ensemble in belltest and tomography.
struct DebugSource {
  DebugKind kind = DebugKind::Werner;
  double p = 1.0;
  qstate::BellKind bell = qstate::BellKind::PsiPlus;

  qstate::DensityMatrix state() const;
};

struct Scenario {
  std::string name;
  linksim::LinkConfig link;
  std::uint64_t frames = 100000;
  std::optional<analysis::SweepSpec> sweep;
  AnalysisOptions analysis;
  std::optional<DebugSource> debug_source;
  std::optional<std::string> output_dir;
  // Dotted paths of values produced by qrlink_calibrate rather than measured.
  std::vector<std::string> fitted;

  // Physical validation of the link and sweep; throws ConfigError.
  void validate() const;
};

// Applies "dotted.path=value" to a raw document. The value is parsed as JSON
// when possible and taken as a string otherwise. Array elements are addressed
// by index ("detectors.0.efficiency").
void apply_override(nlohmann::json& doc, std::string_view assignment);

// Strict parse: unknown keys and type mismatches raise SchemaError with the
// line of the offending key in `text`.
Scenario parse_scenario(std::string_view text, const std::vector<std::string>& overrides = {});
Scenario load_scenario(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

nlohmann::json to_json(const Scenario& s);
// Sorted-key compact dump of to_json.
std::string canonical_text(const Scenario& s);
// Hex SHA-256 of canonical_text.
std::string config_hash(const Scenario& s);
std::string sha256_hex(std::string_view data);

}  // namespace qrlink::scenario
