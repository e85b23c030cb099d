#include "qrlink/analysis.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <random>
#include <stdexcept>
#include <thread>

#include "qrlink/errors.h"

namespace qrlink::analysis {

namespace {

using qstate::Observable;
using qstate::Pauli;

Outcome draw(const std::array<double, 4>& p, double u) {
  double acc = 0.0;
  for (int k = 0; k < 3; ++k) {
    acc += p[k];
    if (u < acc) return static_cast<Outcome>(k);
  }
  return Outcome::kMinusMinus;
}

void require_counts(const OutcomeCounts& c, const char* key) {
  if (c.total() == 0) throw std::invalid_argument(std::string("no counts for setting ") + key);
}

double correlator_variance(const OutcomeCounts& c) {
  const double e = c.correlator();
  return std::max(0.0, 1.0 - e * e) / static_cast<double>(c.total());
}

}  // namespace

OutcomeCounts simulate_measurement(std::span<const DensityMatrix> states, const MeasurementSetting& setting,
                                   Rng& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  OutcomeCounts out;
  for (const auto& rho : states) out.add(draw(qstate::outcome_probabilities(rho, setting), uni(rng)));
  return out;
}

OutcomeCounts sample_outcomes(const DensityMatrix& rho, const MeasurementSetting& setting, std::uint64_t n,
                              Rng& rng) {
  const auto p = qstate::outcome_probabilities(rho, setting);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  OutcomeCounts out;
  for (std::uint64_t i = 0; i < n; ++i) out.add(draw(p, uni(rng)));
  return out;
}

Estimate estimate_witness(const OutcomeCounts& xx, const OutcomeCounts& yy, const OutcomeCounts& zz, int sign) {
  if (sign != 1 && sign != -1) throw std::invalid_argument("sign must be +1 or -1");
  require_counts(xx, "XX");
  require_counts(yy, "YY");
  require_counts(zz, "ZZ");
  Estimate e;
  e.value = qstate::witness_fidelity(xx.correlator(), yy.correlator(), zz.correlator(), sign);
  e.err = 0.25 * std::sqrt(correlator_variance(xx) + correlator_variance(yy) + correlator_variance(zz));
  return e;
}

Estimate estimate_witness(const TallyTable& t, int sign) {
  return estimate_witness(t.at("XX"), t.at("YY"), t.at("ZZ"), sign);
}

ChshEstimate estimate_chsh(const std::array<OutcomeCounts, 4>& counts) {
  ChshEstimate s;
  double var = 0.0;
  for (int k = 0; k < 4; ++k) {
    require_counts(counts[k], qstate::kChshKeys[k]);
    s.value += (k == 3 ? -1.0 : 1.0) * counts[k].correlator();
    var += correlator_variance(counts[k]);
  }
  s.err = std::sqrt(var);
  if (s.err > 0.0) {
    s.significance = (s.value - 2.0) / s.err;
  } else {
    s.significance = s.value > 2.0 ? std::numeric_limits<double>::infinity()
                                   : (s.value < 2.0 ? -std::numeric_limits<double>::infinity() : 0.0);
  }
  return s;
}

ChshEstimate estimate_chsh(const TallyTable& t) {
  std::array<OutcomeCounts, 4> c;
  for (int k = 0; k < 4; ++k) c[k] = t.at(qstate::kChshKeys[k]);
  return estimate_chsh(c);
}

std::uint64_t setting_stream(const std::string& key) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : key) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

TallyTable measure_settings(const DensityMatrix& rho,
                            std::span<const std::pair<std::string, MeasurementSetting>> settings,
                            std::uint64_t samples_per_setting, std::uint64_t seed) {
  TallyTable t;
  for (const auto& [key, setting] : settings) {
    Rng rng = make_rng(seed, Stream::kMeasurement, setting_stream(key));
    t[key] += sample_outcomes(rho, setting, samples_per_setting, rng);
  }
  return t;
}

std::vector<std::pair<std::string, MeasurementSetting>> witness_settings() {
  std::vector<std::pair<std::string, MeasurementSetting>> out;
  for (Pauli p : {Pauli::X, Pauli::Y, Pauli::Z}) {
    const Observable o = Observable::from_pauli(p);
    out.emplace_back(std::string(2, qstate::pauli_char(p)), MeasurementSetting{o, o});
  }
  return out;
}

std::vector<std::pair<std::string, MeasurementSetting>> chsh_settings() {
  std::vector<std::pair<std::string, MeasurementSetting>> out;
  const auto s = qstate::standard_chsh_settings();
  for (int k = 0; k < 4; ++k) out.emplace_back(qstate::kChshKeys[k], s[k]);
  return out;
}

std::vector<std::pair<std::string, MeasurementSetting>> tomography_settings() {
  std::vector<std::pair<std::string, MeasurementSetting>> out;
  for (const auto& l : qstate::tomography_labels()) {
    out.emplace_back(l.key(), MeasurementSetting{Observable::from_pauli(l.a), Observable::from_pauli(l.b)});
  }
  return out;
}

namespace {

TomographyReport finish_tomography(TallyTable tallies) {
  TomographyReport r;
  r.state = qstate::tomography_reconstruct(tallies);
  r.fidelity_plus = qstate::fidelity_to_bell(r.state, qstate::BellKind::PsiPlus);
  r.fidelity_minus = qstate::fidelity_to_bell(r.state, qstate::BellKind::PsiMinus);
  r.tallies = std::move(tallies);
  return r;
}

}  // namespace

TomographyReport run_tomography(const DensityMatrix& rho, std::uint64_t samples_per_setting, std::uint64_t seed) {
  if (samples_per_setting == 0) throw std::invalid_argument("samples_per_setting must be positive");
  const auto settings = tomography_settings();
  return finish_tomography(measure_settings(rho, settings, samples_per_setting, seed));
}

TomographyReport run_tomography(std::span<const DensityMatrix> states, std::uint64_t samples_per_setting,
                                Rng& rng) {
  if (samples_per_setting == 0) throw std::invalid_argument("samples_per_setting must be positive");
  if (states.empty()) throw std::invalid_argument("empty state stream");
  const auto settings = tomography_settings();
  TallyTable t;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const std::uint64_t total = samples_per_setting * settings.size();
  for (std::uint64_t i = 0; i < total; ++i) {
    const auto& [key, setting] = settings[i % settings.size()];
    const auto& rho = states[i % states.size()];
    t[key].add(draw(qstate::outcome_probabilities(rho, setting), uni(rng)));
  }
  return finish_tomography(std::move(t));
}

double compute_edr(double verified_pairs, double wall_time_s) {
  if (!(wall_time_s > 0.0)) throw std::invalid_argument("wall time must be positive");
  if (verified_pairs < 0.0) throw std::invalid_argument("negative pair count");
  return verified_pairs / wall_time_s;
}

PointResult evaluate_point(const LinkConfig& cfg, const linksim::RunSummary& summary,
                           const CampaignOptions& campaign) {
  PointResult r;
  r.summary = summary;
  RatePoint& p = r.point;
  p.power_mw = cfg.source_a.pump_power_mw;
  p.window_ns = cfg.protocol.coincidence_window_ns;
  p.herald_hz = summary.herald_rate_hz();
  p.analyzed_hz = summary.analyzed_rate_hz();
  p.edr_hz = compute_edr(summary.expected_fourfold, summary.wall_time_s);
  p.realized_edr_hz = compute_edr(static_cast<double>(summary.realized_fourfold), summary.wall_time_s);
  const auto& ens = summary.ensembles[0];
  p.delivered_pairs = ens.pairs;
  if (ens.empty() || campaign.samples_per_setting == 0) return r;
  r.state = ens.state();
  p.has_state = true;
  p.exact_fidelity = qstate::fidelity_to_bell(*r.state, qstate::BellKind::PsiPlus);
  p.exact_chsh = qstate::chsh_value(*r.state, qstate::standard_chsh_settings());
  auto settings = witness_settings();
  const auto chsh = chsh_settings();
  settings.insert(settings.end(), chsh.begin(), chsh.end());
  r.tallies = measure_settings(*r.state, settings, campaign.samples_per_setting, cfg.seed);
  const Estimate f = estimate_witness(r.tallies, +1);
  const ChshEstimate s = estimate_chsh(r.tallies);
  p.fidelity = f.value;
  p.fidelity_err = f.err;
  p.chsh = s.value;
  p.chsh_err = s.err;
  p.sig_sigma = s.significance;
  return r;
}

PointResult run_point(const LinkConfig& cfg, std::uint64_t frames, const CampaignOptions& campaign) {
  return evaluate_point(cfg, linksim::run_link(cfg, frames), campaign);
}

void SweepSpec::validate() const {
  if (pump_powers_mw.empty()) throw ConfigError("sweep needs at least one pump power");
  if (windows_ns.empty()) throw ConfigError("sweep needs at least one window");
  if (frames_per_point < 1) throw ConfigError("frames_per_point must be at least 1");
  for (double p : pump_powers_mw) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("pump power must be non-negative");
  }
  for (double w : windows_ns) {
    if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("window must be positive");
  }
}

LinkConfig point_config(const LinkConfig& base, const SweepSpec& spec, std::size_t index) {
  if (index >= spec.size()) throw std::out_of_range("sweep index");
  LinkConfig c = base;
  const double power = spec.pump_powers_mw[index / spec.windows_ns.size()];
  c.source_a.pump_power_mw = power;
  c.source_b.pump_power_mw = power;
  c.protocol.coincidence_window_ns = spec.windows_ns[index % spec.windows_ns.size()];
  return c;
}

std::vector<RatePoint> sweep(const SweepSpec& spec, const LinkConfig& cfg, const CampaignOptions& campaign,
                             unsigned threads, const SweepHooks& hooks) {
  spec.validate();
  for (std::size_t i = 0; i < spec.size(); ++i) point_config(cfg, spec, i).validate();
  std::vector<RatePoint> out(spec.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr error;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= out.size()) return;
      try {
        std::optional<RatePoint> cached = hooks.cached ? hooks.cached(i) : std::nullopt;
        if (cached) {
          out[i] = *cached;
          continue;
        }
        out[i] = run_point(point_config(cfg, spec, i), spec.frames_per_point, campaign).point;
        if (hooks.on_point) hooks.on_point(i, out[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!error) error = std::current_exception();
        next.store(out.size());
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(out.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < n; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

CompareReport spi_tpi_compare(const LinkConfig& cfg, std::uint64_t frames, std::span<const double> offsets_rad,
                              std::uint64_t phase_frames) {
  CompareReport r;
  const auto sum = linksim::run_link(cfg, frames);
  r.click_rate_hz = sum.click_rate_hz();
  r.spi_herald_rate_hz = sum.click_rate_hz();
  r.tpi_herald_rate_hz = sum.herald_rate_hz();
  r.ratio = r.spi_herald_rate_hz > 0.0 ? r.tpi_herald_rate_hz / r.spi_herald_rate_hz : 0.0;

  std::optional<qstate::Matrix4> reference;
  for (double phi : offsets_rad) {
    LinkConfig c = cfg;
    c.protocol.channel_phase_offsets_rad[0] = cfg.protocol.channel_phase_offsets_rad[0] + phi;
    PhaseRow row;
    row.offset_rad = phi;
    row.spi_delta_phi_rad = linksim::spi_phase(c.protocol);
    row.spi_fidelity = qstate::fidelity_to_bell(
        linksim::spi_herald_state(qstate::BellKind::PsiPlus, c.indistinguishability(), row.spi_delta_phi_rad),
        qstate::BellKind::PsiPlus);
    const auto s = linksim::run_link(c, phase_frames);
    const auto& ens = s.ensembles[0];
    if (ens.empty()) {
      row.tpi_fidelity = std::numeric_limits<double>::quiet_NaN();
      r.tpi_phase_invariant = false;
    } else {
      const auto rho = ens.state();
      row.tpi_fidelity = qstate::fidelity_to_bell(rho, qstate::BellKind::PsiPlus);
      if (!reference) {
        reference = rho.matrix();
      } else if (rho.matrix() != *reference) {
        r.tpi_phase_invariant = false;
      }
    }
    r.phase_curve.push_back(row);
  }
  return r;
}

MultiplexProjection multiplexing_projection(const RatePoint& base, std::span<const int> usable_modes,
                                            int base_modes) {
  if (base_modes < 1) throw std::invalid_argument("base_modes must be at least 1");
  MultiplexProjection m;
  m.joint_efficiency = base.analyzed_hz > 0.0 ? base.edr_hz / base.analyzed_hz : 0.0;
  m.cap_hz = base.herald_hz * m.joint_efficiency;
  for (int k : usable_modes) {
    if (k < 0) throw std::invalid_argument("usable mode count must be non-negative");
    m.usable_modes.push_back(k);
    m.edr_hz.push_back(std::min(static_cast<double>(k) / base_modes * base.edr_hz, m.cap_hz));
  }
  return m;
}

photonics::HomConfig hom_config(const LinkConfig& cfg) {
  photonics::HomConfig h;
  h.mu = cfg.mean_pairs(linksim::Node::A);
  h.statistics = cfg.source_a.statistics;
  h.indistinguishability = cfg.indistinguishability();
  const double det = 0.5 * (cfg.detectors[0].efficiency + cfg.detectors[1].efficiency);
  h.idler_efficiency_a = cfg.idler_transmission(linksim::Node::A) * det;
  h.idler_efficiency_b = cfg.idler_transmission(linksim::Node::B) * det;
  h.signal_efficiency_a = cfg.source_a.heralding_efficiency;
  h.signal_efficiency_b = cfg.source_b.heralding_efficiency;
  return h;
}

}  // namespace qrlink::analysis
