#include "qrlink/scenario.h"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "qrlink/errors.h"

namespace qrlink::scenario {

using nlohmann::json;

namespace {

int line_at(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  int line = 1;
  for (std::size_t i = 0; i < offset; ++i) {
    if (text[i] == '\n') ++line;
  }
  return line;
}

// First line holding `"key"` followed by a colon; 0 when absent.
int line_of_key(std::string_view text, const std::string& key) {
  const std::string quoted = "\"" + key + "\"";
  for (std::size_t pos = text.find(quoted); pos != std::string_view::npos; pos = text.find(quoted, pos + 1)) {
    std::size_t k = pos + quoted.size();
    while (k < text.size() && (text[k] == ' ' || text[k] == '\t' || text[k] == '\n' || text[k] == '\r')) ++k;
    if (k < text.size() && text[k] == ':') return line_at(text, pos);
  }
  return 0;
}

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  [[noreturn]] void fail(const std::string& path, const std::string& key, const std::string& msg) const {
    const int line = line_of_key(text_, key);
    std::ostringstream os;
    if (line > 0) os << "line " << line << ": ";
    os << (path.empty() ? key : path + "." + key) << ": " << msg;
    throw SchemaError(os.str(), line);
  }

  void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) const {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (!ok.count(it.key())) fail(path, it.key(), "unknown key");
    }
  }

  const json* child(const json& obj, const std::string& path, const std::string& key, json::value_t type) const {
    if (!obj.contains(key)) return nullptr;
    const json& c = obj.at(key);
    if (c.type() != type) fail(path, key, type == json::value_t::object ? "expected an object" : "expected an array");
    return &c;
  }

  double num(const json& obj, const std::string& path, const std::string& key, double def) const {
    if (!obj.contains(key)) return def;
    const json& v = obj.at(key);
    if (!v.is_number()) fail(path, key, "expected a number");
    return v.get<double>();
  }

  std::uint64_t uint(const json& obj, const std::string& path, const std::string& key, std::uint64_t def) const {
    if (!obj.contains(key)) return def;
    const json& v = obj.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    fail(path, key, "expected a non-negative integer");
  }

  bool boolean(const json& obj, const std::string& path, const std::string& key, bool def) const {
    if (!obj.contains(key)) return def;
    const json& v = obj.at(key);
    if (!v.is_boolean()) fail(path, key, "expected true or false");
    return v.get<bool>();
  }

  std::string str(const json& obj, const std::string& path, const std::string& key, const std::string& def) const {
    if (!obj.contains(key)) return def;
    const json& v = obj.at(key);
    if (!v.is_string()) fail(path, key, "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> nums(const json& obj, const std::string& path, const std::string& key,
                           std::vector<double> def) const {
    if (!obj.contains(key)) return def;
    const json& v = obj.at(key);
    if (!v.is_array()) fail(path, key, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) fail(path, key, "expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

 private:
  std::string_view text_;
};

photonics::PhotonStatistics parse_statistics(const Reader& r, const std::string& path, const std::string& s) {
  if (s == "thermal") return photonics::PhotonStatistics::Thermal;
  if (s == "poisson") return photonics::PhotonStatistics::Poisson;
  if (s == "single_pair") return photonics::PhotonStatistics::SinglePair;
  r.fail(path, "statistics", "expected thermal, poisson or single_pair");
}

const char* statistics_name(photonics::PhotonStatistics s) {
  switch (s) {
    case photonics::PhotonStatistics::Thermal: return "thermal";
    case photonics::PhotonStatistics::Poisson: return "poisson";
    case photonics::PhotonStatistics::SinglePair: return "single_pair";
  }
  return "thermal";
}

void read_source(const Reader& r, const json& j, const std::string& path, photonics::SourceConfig& s) {
  r.check_keys(j, path,
               {"pair_rate_per_mw_hz", "pump_power_mw", "heralding_efficiency", "indistinguishability", "statistics"});
  s.pair_rate_per_mw_hz = r.num(j, path, "pair_rate_per_mw_hz", s.pair_rate_per_mw_hz);
  s.pump_power_mw = r.num(j, path, "pump_power_mw", s.pump_power_mw);
  s.heralding_efficiency = r.num(j, path, "heralding_efficiency", s.heralding_efficiency);
  s.indistinguishability = r.num(j, path, "indistinguishability", s.indistinguishability);
  s.statistics = parse_statistics(r, path, r.str(j, path, "statistics", statistics_name(s.statistics)));
}

void read_channel(const Reader& r, const json& j, const std::string& path, photonics::ChannelConfig& c) {
  r.check_keys(j, path, {"length_km", "attenuation_db_per_km", "extra_loss_db", "delay_us_per_km"});
  c.length_km = r.num(j, path, "length_km", c.length_km);
  c.attenuation_db_per_km = r.num(j, path, "attenuation_db_per_km", c.attenuation_db_per_km);
  c.extra_loss_db = r.num(j, path, "extra_loss_db", c.extra_loss_db);
  c.delay_us_per_km = r.num(j, path, "delay_us_per_km", c.delay_us_per_km);
}

void read_memory(const Reader& r, const json& j, const std::string& path, linksim::MemoryConfig& m) {
  r.check_keys(j, path, {"storage_efficiency", "storage_time_us", "bandwidth_mhz"});
  m.storage_efficiency = r.num(j, path, "storage_efficiency", m.storage_efficiency);
  m.storage_time_us = r.num(j, path, "storage_time_us", m.storage_time_us);
  m.bandwidth_mhz = r.num(j, path, "bandwidth_mhz", m.bandwidth_mhz);
}

json source_json(const photonics::SourceConfig& s) {
  return {{"pair_rate_per_mw_hz", s.pair_rate_per_mw_hz},
          {"pump_power_mw", s.pump_power_mw},
          {"heralding_efficiency", s.heralding_efficiency},
          {"indistinguishability", s.indistinguishability},
          {"statistics", statistics_name(s.statistics)}};
}

json channel_json(const photonics::ChannelConfig& c) {
  return {{"length_km", c.length_km},
          {"attenuation_db_per_km", c.attenuation_db_per_km},
          {"extra_loss_db", c.extra_loss_db},
          {"delay_us_per_km", c.delay_us_per_km}};
}

json memory_json(const linksim::MemoryConfig& m) {
  return {{"storage_efficiency", m.storage_efficiency},
          {"storage_time_us", m.storage_time_us},
          {"bandwidth_mhz", m.bandwidth_mhz}};
}

json parse_value(std::string_view raw) {
  try {
    return json::parse(raw);
  } catch (const json::parse_error&) {
    return json(std::string(raw));
  }
}

}  // namespace

qstate::DensityMatrix DebugSource::state() const {
  if (kind == DebugKind::Bell) return qstate::bell_state(bell);
  return qstate::werner(p, bell);
}

void Scenario::validate() const {
  link.validate();
  if (sweep) sweep->validate();
  if (debug_source && !(debug_source->p >= 0.0 && debug_source->p <= 1.0)) {
    throw ConfigError("debug_source.p outside [0, 1]");
  }
  if (analysis.samples_per_setting == 0) throw ConfigError("analysis.samples_per_setting must be positive");
  for (int k : analysis.usable_modes) {
    if (k < 0) throw ConfigError("analysis.usable_modes entries must be non-negative");
  }
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw SchemaError("override '" + std::string(assignment) + "' is not key=value", 0);
  }
  const std::string path(assignment.substr(0, eq));
  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw SchemaError("override path '" + path + "' is malformed", 0);
    const bool last = dot == std::string::npos;
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(part);
      } catch (const std::exception&) {
        throw SchemaError("override path '" + path + "': '" + part + "' is not an array index", 0);
      }
      if (idx >= node->size()) throw SchemaError("override path '" + path + "': index out of range", 0);
      node = &(*node)[idx];
    } else {
      if (node->is_null()) *node = json::object();
      if (!node->is_object()) throw SchemaError("override path '" + path + "' descends into a scalar", 0);
      node = &(*node)[part];
    }
    if (last) break;
    start = dot + 1;
  }
  *node = parse_value(assignment.substr(eq + 1));
}

Scenario parse_scenario(std::string_view text, const std::vector<std::string>& overrides) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const int line = line_at(text, e.byte == 0 ? 0 : e.byte - 1);
    throw SchemaError("line " + std::to_string(line) + ": invalid JSON: " + e.what(), line);
  }
  if (!doc.is_object()) throw SchemaError("line 1: scenario must be a JSON object", 1);
  for (const auto& o : overrides) apply_override(doc, o);

  const Reader r(text);
  r.check_keys(doc, "",
               {"name", "seed", "frames", "source_a", "source_b", "channel_a", "channel_b", "detectors", "memory_a",
                "memory_b", "verification", "grid", "protocol", "sweep", "analysis", "debug_source", "output_dir",
                "fitted"});
  Scenario s;
  s.name = r.str(doc, "", "name", "");
  s.frames = r.uint(doc, "", "frames", s.frames);
  auto& L = s.link;
  L.seed = r.uint(doc, "", "seed", L.seed);
  if (auto* j = r.child(doc, "", "source_a", json::value_t::object)) read_source(r, *j, "source_a", L.source_a);
  if (auto* j = r.child(doc, "", "source_b", json::value_t::object)) read_source(r, *j, "source_b", L.source_b);
  if (auto* j = r.child(doc, "", "channel_a", json::value_t::object)) read_channel(r, *j, "channel_a", L.channel_a);
  if (auto* j = r.child(doc, "", "channel_b", json::value_t::object)) read_channel(r, *j, "channel_b", L.channel_b);
  if (auto* j = r.child(doc, "", "detectors", json::value_t::array)) {
    if (j->size() != 2) r.fail("", "detectors", "expected exactly two detectors");
    for (int d = 0; d < 2; ++d) {
      const json& e = (*j)[d];
      const std::string path = "detectors[" + std::to_string(d) + "]";
      if (!e.is_object()) r.fail("", "detectors", "entries must be objects");
      r.check_keys(e, path, {"efficiency", "dark_rate_hz"});
      L.detectors[d].efficiency = r.num(e, path, "efficiency", L.detectors[d].efficiency);
      L.detectors[d].dark_rate_hz = r.num(e, path, "dark_rate_hz", L.detectors[d].dark_rate_hz);
    }
  }
  if (auto* j = r.child(doc, "", "memory_a", json::value_t::object)) read_memory(r, *j, "memory_a", L.memory_a);
  if (auto* j = r.child(doc, "", "memory_b", json::value_t::object)) read_memory(r, *j, "memory_b", L.memory_b);
  if (auto* j = r.child(doc, "", "verification", json::value_t::object)) {
    const std::string p = "verification";
    auto& v = L.verification;
    r.check_keys(*j, p,
                 {"efficiency", "background_rate_hz", "bypass_transmission", "passive_tpc_success",
                  "retrieval_visibility_boost"});
    v.efficiency = r.num(*j, p, "efficiency", v.efficiency);
    v.background_rate_hz = r.num(*j, p, "background_rate_hz", v.background_rate_hz);
    v.bypass_transmission = r.num(*j, p, "bypass_transmission", v.bypass_transmission);
    v.passive_tpc_success = r.num(*j, p, "passive_tpc_success", v.passive_tpc_success);
    v.retrieval_visibility_boost = r.num(*j, p, "retrieval_visibility_boost", v.retrieval_visibility_boost);
  }
  if (auto* j = r.child(doc, "", "grid", json::value_t::object)) {
    const std::string p = "grid";
    r.check_keys(*j, p, {"mode_duration_ns", "frame_duration_us", "mode_coverage"});
    L.grid.mode_duration_ns = r.num(*j, p, "mode_duration_ns", L.grid.mode_duration_ns);
    L.grid.frame_duration_us = r.num(*j, p, "frame_duration_us", L.grid.frame_duration_us);
    L.grid.mode_coverage = r.num(*j, p, "mode_coverage", L.grid.mode_coverage);
  }
  if (auto* j = r.child(doc, "", "protocol", json::value_t::object)) {
    const std::string p = "protocol";
    auto& o = L.protocol;
    r.check_keys(*j, p,
                 {"mode", "coincidence_window_ns", "fixed_delay_filter_ns", "memory_bypass", "feed_forward",
                  "channel_phase_offsets_rad", "laser_phase_offset_rad", "duty_cycle", "processing_delay_us"});
    const std::string mode = r.str(*j, p, "mode", "tpi");
    if (mode == "tpi") {
      o.mode = linksim::HeraldMode::TPI;
    } else if (mode == "spi") {
      o.mode = linksim::HeraldMode::SPI;
    } else {
      r.fail(p, "mode", "expected tpi or spi");
    }
    o.coincidence_window_ns = r.num(*j, p, "coincidence_window_ns", o.coincidence_window_ns);
    if (j->contains("fixed_delay_filter_ns")) {
      if (j->at("fixed_delay_filter_ns").is_null()) {
        o.fixed_delay_filter_ns.reset();
      } else {
        o.fixed_delay_filter_ns = r.num(*j, p, "fixed_delay_filter_ns", 0.0);
      }
    }
    o.memory_bypass = r.boolean(*j, p, "memory_bypass", o.memory_bypass);
    o.feed_forward = r.boolean(*j, p, "feed_forward", o.feed_forward);
    const auto offsets = r.nums(*j, p, "channel_phase_offsets_rad",
                                {o.channel_phase_offsets_rad[0], o.channel_phase_offsets_rad[1]});
    if (offsets.size() != 2) r.fail(p, "channel_phase_offsets_rad", "expected two entries");
    o.channel_phase_offsets_rad = {offsets[0], offsets[1]};
    o.laser_phase_offset_rad = r.num(*j, p, "laser_phase_offset_rad", o.laser_phase_offset_rad);
    o.duty_cycle = r.num(*j, p, "duty_cycle", o.duty_cycle);
    o.processing_delay_us = r.num(*j, p, "processing_delay_us", o.processing_delay_us);
  }
  if (auto* j = r.child(doc, "", "sweep", json::value_t::object)) {
    const std::string p = "sweep";
    r.check_keys(*j, p, {"pump_powers_mw", "windows_ns", "frames_per_point"});
    analysis::SweepSpec sw;
    sw.pump_powers_mw = r.nums(*j, p, "pump_powers_mw", {});
    sw.windows_ns = r.nums(*j, p, "windows_ns", {});
    sw.frames_per_point = r.uint(*j, p, "frames_per_point", s.frames);
    s.sweep = sw;
  }
  if (auto* j = r.child(doc, "", "analysis", json::value_t::object)) {
    const std::string p = "analysis";
    auto& a = s.analysis;
    r.check_keys(*j, p, {"samples_per_setting", "log_frames", "phase_offsets_rad", "phase_frames", "usable_modes"});
    a.samples_per_setting = r.uint(*j, p, "samples_per_setting", a.samples_per_setting);
    a.log_frames = r.uint(*j, p, "log_frames", a.log_frames);
    a.phase_offsets_rad = r.nums(*j, p, "phase_offsets_rad", a.phase_offsets_rad);
    a.phase_frames = r.uint(*j, p, "phase_frames", a.phase_frames);
    if (j->contains("usable_modes")) {
      a.usable_modes.clear();
      const json& um = j->at("usable_modes");
      if (!um.is_array()) r.fail(p, "usable_modes", "expected an array of integers");
      for (const auto& e : um) {
        if (!e.is_number_integer()) r.fail(p, "usable_modes", "expected an array of integers");
        a.usable_modes.push_back(e.get<int>());
      }
    }
  }
  if (auto* j = r.child(doc, "", "debug_source", json::value_t::object)) {
    const std::string p = "debug_source";
    r.check_keys(*j, p, {"kind", "p", "bell"});
    DebugSource d;
    const std::string kind = r.str(*j, p, "kind", "werner");
    if (kind == "werner") {
      d.kind = DebugKind::Werner;
    } else if (kind == "bell") {
      d.kind = DebugKind::Bell;
    } else {
      r.fail(p, "kind", "expected werner or bell");
    }
    d.p = r.num(*j, p, "p", d.p);
    const std::string bell = r.str(*j, p, "bell", "psi+");
    if (bell == "psi+") {
      d.bell = qstate::BellKind::PsiPlus;
    } else if (bell == "psi-") {
      d.bell = qstate::BellKind::PsiMinus;
    } else {
      r.fail(p, "bell", "expected psi+ or psi-");
    }
    s.debug_source = d;
  }
  if (doc.contains("output_dir")) s.output_dir = r.str(doc, "", "output_dir", "");
  if (auto* j = r.child(doc, "", "fitted", json::value_t::array)) {
    for (const auto& e : *j) {
      if (!e.is_string()) r.fail("", "fitted", "expected an array of strings");
      s.fitted.push_back(e.get<std::string>());
    }
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot read scenario file " + path.string(), 0);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), overrides);
}

json to_json(const Scenario& s) {
  const auto& L = s.link;
  json j;
  j["name"] = s.name;
  j["seed"] = L.seed;
  j["frames"] = s.frames;
  j["source_a"] = source_json(L.source_a);
  j["source_b"] = source_json(L.source_b);
  j["channel_a"] = channel_json(L.channel_a);
  j["channel_b"] = channel_json(L.channel_b);
  j["detectors"] = json::array();
  for (const auto& d : L.detectors) j["detectors"].push_back({{"efficiency", d.efficiency}, {"dark_rate_hz", d.dark_rate_hz}});
  j["memory_a"] = memory_json(L.memory_a);
  j["memory_b"] = memory_json(L.memory_b);
  const auto& v = L.verification;
  j["verification"] = {{"efficiency", v.efficiency},
                       {"background_rate_hz", v.background_rate_hz},
                       {"bypass_transmission", v.bypass_transmission},
                       {"passive_tpc_success", v.passive_tpc_success},
                       {"retrieval_visibility_boost", v.retrieval_visibility_boost}};
  j["grid"] = {{"mode_duration_ns", L.grid.mode_duration_ns},
               {"frame_duration_us", L.grid.frame_duration_us},
               {"mode_coverage", L.grid.mode_coverage}};
  const auto& o = L.protocol;
  j["protocol"] = {{"mode", o.mode == linksim::HeraldMode::TPI ? "tpi" : "spi"},
                   {"coincidence_window_ns", o.coincidence_window_ns},
                   {"fixed_delay_filter_ns", o.fixed_delay_filter_ns ? json(*o.fixed_delay_filter_ns) : json(nullptr)},
                   {"memory_bypass", o.memory_bypass},
                   {"feed_forward", o.feed_forward},
                   {"channel_phase_offsets_rad", {o.channel_phase_offsets_rad[0], o.channel_phase_offsets_rad[1]}},
                   {"laser_phase_offset_rad", o.laser_phase_offset_rad},
                   {"duty_cycle", o.duty_cycle},
                   {"processing_delay_us", o.processing_delay_us}};
  if (s.sweep) {
    j["sweep"] = {{"pump_powers_mw", s.sweep->pump_powers_mw},
                  {"windows_ns", s.sweep->windows_ns},
                  {"frames_per_point", s.sweep->frames_per_point}};
  }
  const auto& a = s.analysis;
  j["analysis"] = {{"samples_per_setting", a.samples_per_setting},
                   {"log_frames", a.log_frames},
                   {"phase_offsets_rad", a.phase_offsets_rad},
                   {"phase_frames", a.phase_frames},
                   {"usable_modes", a.usable_modes}};
  if (s.debug_source) {
    const auto& d = *s.debug_source;
    j["debug_source"] = {{"kind", d.kind == DebugKind::Werner ? "werner" : "bell"},
                         {"p", d.p},
                         {"bell", d.bell == qstate::BellKind::PsiPlus ? "psi+" : "psi-"}};
  }
  if (s.output_dir) j["output_dir"] = *s.output_dir;
  if (!s.fitted.empty()) j["fitted"] = s.fitted;
  return j;
}

std::string canonical_text(const Scenario& s) { return to_json(s).dump(); }

std::string config_hash(const Scenario& s) { return sha256_hex(canonical_text(s)); }

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

}  // namespace qrlink::scenario
