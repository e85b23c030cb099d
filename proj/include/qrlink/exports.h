#pragma once

// Text exports: versioned CSV logs, sweep tables and run manifests. All files
// are written to a temporary sibling and renamed into place.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qrlink/analysis.h"
#include "qrlink/linksim.h"

namespace qrlink::exports {

inline constexpr const char* kToolName = "qrlink";
inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kLogFormatVersion = 1;

void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

// "%.17g" for values that must round-trip; times use fixed 3 decimals (ps).
std::string fmt_exact(double v);
std::string fmt_time(double ns);

std::string tags_string(std::uint8_t tags);  // e.g. "A", "A|B", "dark"

// Accumulates rows for the three per-run logs.
class RunLog {
 public:
  void event(const linksim::DetectionEvent& e);
  void herald(const linksim::HeraldRecord& h);
  void delivered(const linksim::DeliveredPair& p);

  std::string events_csv() const;
  std::string heralds_csv() const;
  std::string delivered_csv() const;

  // Observer feeding this log for frames below log_frames.
  linksim::RunObserver observer(std::uint64_t log_frames);

 private:
  std::string events_;
  std::string heralds_;
  std::string delivered_;
};

std::string sweep_csv_header();
std::string sweep_csv_row(const analysis::RatePoint& p);

nlohmann::json rate_point_json(const analysis::RatePoint& p);
nlohmann::json run_summary_json(const linksim::RunSummary& s);
nlohmann::json tally_json(const TallyTable& t);

// Non-finite numbers become null.
nlohmann::json finite_or_null(double v);

// ISO-8601 UTC timestamp. Without wall_clock the time comes from
// SOURCE_DATE_EPOCH (or 0), so manifests are reproducible.
std::string timestamp(bool wall_clock);

struct ManifestInfo {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::uint64_t frames = 0;
  std::string started_at;
  std::string finished_at;
  // Relative names inside the output directory.
  std::vector<std::string> outputs;
};

// Writes manifest.json listing each output with its SHA-256.
void write_manifest(const std::filesystem::path& dir, const ManifestInfo& info);

}  // namespace qrlink::exports
