#include "qrlink/exports.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "qrlink/scenario.h"

namespace qrlink::exports {

namespace fs = std::filesystem;
using nlohmann::json;

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string fmt_exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_time(double ns) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", ns);
  return buf;
}

std::string tags_string(std::uint8_t tags) {
  std::string s;
  auto add = [&](const char* t) {
    if (!s.empty()) s += '|';
    s += t;
  };
  if (tags & linksim::kFromA) add("A");
  if (tags & linksim::kFromB) add("B");
  if (tags & linksim::kDark) add("dark");
  return s;
}

namespace {

const char* det_name(linksim::Detector d) { return d == linksim::Detector::D1 ? "D1" : "D2"; }

std::string header(const char* kind, const char* columns) {
  return std::string("# qrlink ") + kind + " v" + std::to_string(kLogFormatVersion) + "\n" + columns + "\n";
}

}  // namespace

void RunLog::event(const linksim::DetectionEvent& e) {
  events_ += fmt_time(e.abs_time_ns) + ",C," + det_name(e.detector) + "," + tags_string(e.tags) + "," +
             std::to_string(e.frame) + "," + std::to_string(e.mode) + "\n";
}

void RunLog::herald(const linksim::HeraldRecord& h) {
  heralds_ += fmt_time(h.t1_ns) + "," + fmt_time(h.t2_ns) + "," + det_name(h.detectors[0]) + "," +
              det_name(h.detectors[1]) + "," + qstate::to_string(h.parity) + "," + linksim::to_string(h.category) +
              "," + std::to_string(h.mode_indices[0]) + "," + std::to_string(h.mode_indices[1]) + "," +
              (h.analyzed ? "1" : "0") + "\n";
}

void RunLog::delivered(const linksim::DeliveredPair& p) {
  delivered_ += fmt_time(p.herald.t1_ns) + "," + fmt_time(p.herald.t2_ns) + "," + qstate::to_string(p.herald.parity) +
                "," + qstate::to_string(p.delivered_parity) + "," + fmt_time(p.delivered_at_ns) + "," +
                linksim::to_string(p.herald.category) + "," + fmt_exact(p.fourfold_probability) + "," +
                fmt_exact(qstate::fidelity_to_bell(p.state, p.delivered_parity)) + "," +
                std::to_string(p.stored_excitations[0]) + "," + std::to_string(p.stored_excitations[1]) + "," +
                (p.retrieval_success[0] ? "1" : "0") + "," + (p.retrieval_success[1] ? "1" : "0") + "," +
                (p.verified[0] ? "1" : "0") + "," + (p.verified[1] ? "1" : "0") + "," + (p.tpc_success ? "1" : "0") +
                "\n";
}

std::string RunLog::events_csv() const {
  return header("events", "time_ns,node,detector,tags,frame,mode") + events_;
}

std::string RunLog::heralds_csv() const {
  return header("heralds", "t1_ns,t2_ns,detector1,detector2,parity,category,mode1,mode2,analyzed") + heralds_;
}

std::string RunLog::delivered_csv() const {
  return header("delivered",
                "t1_ns,t2_ns,herald_parity,delivered_parity,delivered_at_ns,category,fourfold_probability,fidelity,"
                "stored_a,stored_b,retrieved_a,retrieved_b,verified_a,verified_b,tpc") +
         delivered_;
}

linksim::RunObserver RunLog::observer(std::uint64_t log_frames) {
  linksim::RunObserver o;
  o.log_frames = log_frames;
  o.on_event = [this](const linksim::DetectionEvent& e) { event(e); };
  o.on_herald = [this](const linksim::HeraldRecord& h) { herald(h); };
  o.on_delivered = [this](const linksim::DeliveredPair& p) { delivered(p); };
  return o;
}

std::string sweep_csv_header() {
  return "power_mw,window_ns,herald_hz,edr_hz,fidelity,fidelity_err,chsh,chsh_err,sig_sigma\n";
}

std::string sweep_csv_row(const analysis::RatePoint& p) {
  auto f = [&](double v) { return p.has_state ? fmt_exact(v) : std::string("nan"); };
  return fmt_exact(p.power_mw) + "," + fmt_exact(p.window_ns) + "," + fmt_exact(p.herald_hz) + "," +
         fmt_exact(p.edr_hz) + "," + f(p.fidelity) + "," + f(p.fidelity_err) + "," + f(p.chsh) + "," +
         f(p.chsh_err) + "," + f(p.sig_sigma) + "\n";
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json rate_point_json(const analysis::RatePoint& p) {
  return {{"power_mw", p.power_mw},
          {"window_ns", p.window_ns},
          {"herald_hz", p.herald_hz},
          {"analyzed_hz", p.analyzed_hz},
          {"edr_hz", p.edr_hz},
          {"realized_edr_hz", p.realized_edr_hz},
          {"delivered_pairs", p.delivered_pairs},
          {"has_state", p.has_state},
          {"fidelity", finite_or_null(p.fidelity)},
          {"fidelity_err", finite_or_null(p.fidelity_err)},
          {"chsh", finite_or_null(p.chsh)},
          {"chsh_err", finite_or_null(p.chsh_err)},
          {"sig_sigma", finite_or_null(p.sig_sigma)},
          {"exact_fidelity", finite_or_null(p.exact_fidelity)},
          {"exact_chsh", finite_or_null(p.exact_chsh)}};
}

json run_summary_json(const linksim::RunSummary& s) {
  json cats;
  for (int c = 0; c < 4; ++c) {
    cats[linksim::to_string(static_cast<linksim::HeraldCategory>(c))] = s.analyzed_by_category[c];
  }
  json ens = json::array();
  for (int k = 0; k < 2; ++k) {
    const auto& e = s.ensembles[k];
    ens.push_back({{"parity", k == 0 ? "psi+" : "psi-"},
                   {"pairs", e.pairs},
                   {"expected_fourfold", e.weight},
                   {"realized_fourfold", e.realized}});
  }
  return {{"frames", s.frames},
          {"wall_time_s", s.wall_time_s},
          {"clicks", s.clicks},
          {"clicks_by_detector", s.clicks_by_detector},
          {"heralds", s.heralds},
          {"analyzed", s.analyzed},
          {"analyzed_by_category", cats},
          {"dropped_deadline", s.dropped_deadline},
          {"expected_fourfold", s.expected_fourfold},
          {"realized_fourfold", s.realized_fourfold},
          {"click_rate_hz", s.click_rate_hz()},
          {"herald_rate_hz", s.herald_rate_hz()},
          {"analyzed_rate_hz", s.analyzed_rate_hz()},
          {"expected_edr_hz", s.expected_edr_hz()},
          {"realized_edr_hz", s.realized_edr_hz()},
          {"ensembles", ens}};
}

json tally_json(const TallyTable& t) {
  json j = json::object();
  for (const auto& [key, c] : t.entries()) j[key] = {{"++", c.n[0]}, {"+-", c.n[1]}, {"-+", c.n[2]}, {"--", c.n[3]}};
  return j;
}

std::string timestamp(bool wall_clock) {
  std::time_t t = 0;
  if (wall_clock) {
    t = std::time(nullptr);
  } else if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
    t = static_cast<std::time_t>(std::strtoll(env, nullptr, 10));
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const fs::path& dir, const ManifestInfo& info) {
  json outputs = json::array();
  for (const auto& name : info.outputs) {
    outputs.push_back({{"file", name}, {"sha256", scenario::sha256_hex(read_file(dir / name))}});
  }
  const json j = {{"tool", kToolName},
                  {"version", kToolVersion},
                  {"command", info.command},
                  {"config_hash", info.config_hash},
                  {"seed", info.seed},
                  {"frames", info.frames},
                  {"started_at", info.started_at},
                  {"finished_at", info.finished_at},
                  {"outputs", outputs}};
  write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

}  // namespace qrlink::exports
