#pragma once

// Estimators and experiment harnesses on top of linksim: witness fidelity,
// CHSH, tomography, EDR accounting, sweeps, SPI/TPI comparison and the
// multiplexing projection.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qrlink/linksim.h"
#include "qrlink/photonics.h"
#include "qrlink/qstate.h"
#include "qrlink/tally.h"

namespace qrlink::analysis {

using linksim::LinkConfig;
using qstate::DensityMatrix;
using qstate::MeasurementSetting;

// One Born-rule outcome per state in the stream.
OutcomeCounts simulate_measurement(std::span<const DensityMatrix> states, const MeasurementSetting& setting,
                                   Rng& rng);

// n i.i.d. outcomes from a single state (or an ensemble mixture), one uniform
// draw per outcome, inverse-CDF.
OutcomeCounts sample_outcomes(const DensityMatrix& rho, const MeasurementSetting& setting, std::uint64_t n,
                              Rng& rng);

struct Estimate {
  double value = 0.0;
  double err = 0.0;
};

struct ChshEstimate {
  double value = 0.0;
  double err = 0.0;
  // (S - 2) / stderr; infinite when stderr is zero.
  double significance = 0.0;
};

// F = (1 - E_ZZ + s E_XX + s E_YY)/4 with var(E) = (1 - E^2)/N per basis.
Estimate estimate_witness(const OutcomeCounts& xx, const OutcomeCounts& yy, const OutcomeCounts& zz, int sign);
Estimate estimate_witness(const TallyTable& t, int sign);  // keys "XX", "YY", "ZZ"

ChshEstimate estimate_chsh(const std::array<OutcomeCounts, 4>& counts);
ChshEstimate estimate_chsh(const TallyTable& t);  // keys A0B0, A0B1, A1B0, A1B1

// Stable stream index for a setting key (FNV-1a), so each setting has its own
// RNG stream independent of campaign order.
std::uint64_t setting_stream(const std::string& key);

// n outcomes per named setting; setting k draws from
// make_rng(seed, Stream::kMeasurement, setting_stream(key)).
TallyTable measure_settings(const DensityMatrix& rho,
                            std::span<const std::pair<std::string, MeasurementSetting>> settings,
                            std::uint64_t samples_per_setting, std::uint64_t seed);

std::vector<std::pair<std::string, MeasurementSetting>> witness_settings();  // XX, YY, ZZ
std::vector<std::pair<std::string, MeasurementSetting>> chsh_settings();
std::vector<std::pair<std::string, MeasurementSetting>> tomography_settings();

struct TomographyReport {
  DensityMatrix state = DensityMatrix::maximally_mixed();
  double fidelity_plus = 0.0;
  double fidelity_minus = 0.0;
  TallyTable tallies;
};

TomographyReport run_tomography(const DensityMatrix& rho, std::uint64_t samples_per_setting, std::uint64_t seed);
// Stream form: state i is measured in setting (i mod 9) until each setting has
// samples_per_setting outcomes; the stream is cycled as needed.
TomographyReport run_tomography(std::span<const DensityMatrix> states, std::uint64_t samples_per_setting,
                                Rng& rng);

// Delivered-and-verified count per simulated second. Throws on non-positive wall time.
double compute_edr(double verified_pairs, double wall_time_s);

struct RatePoint {
  double power_mw = 0.0;
  double window_ns = 0.0;
  double herald_hz = 0.0;
  double analyzed_hz = 0.0;
  // Expected fourfold rate (sum of per-herald fourfold probabilities).
  double edr_hz = 0.0;
  // Rate of sampled fourfold events.
  double realized_edr_hz = 0.0;
  std::uint64_t delivered_pairs = 0;
  bool has_state = false;
  double fidelity = 0.0;
  double fidelity_err = 0.0;
  double chsh = 0.0;
  double chsh_err = 0.0;
  double sig_sigma = 0.0;
  // Exact values of the delivered ensemble.
  double exact_fidelity = 0.0;
  double exact_chsh = 0.0;

  bool operator==(const RatePoint&) const = default;
};

struct CampaignOptions {
  std::uint64_t samples_per_setting = 20000;
};

struct PointResult {
  RatePoint point;
  linksim::RunSummary summary;
  std::optional<DensityMatrix> state;  // psi+ delivered ensemble
  TallyTable tallies;
};

// Runs the link and a measurement campaign (witness and CHSH settings) on the
// delivered psi+ ensemble.
PointResult run_point(const LinkConfig& cfg, std::uint64_t frames, const CampaignOptions& campaign);
// Same, reusing an existing run.
PointResult evaluate_point(const LinkConfig& cfg, const linksim::RunSummary& summary,
                           const CampaignOptions& campaign);

struct SweepSpec {
  std::vector<double> pump_powers_mw;
  std::vector<double> windows_ns;
  std::uint64_t frames_per_point = 1;

  void validate() const;  // throws ConfigError
  std::size_t size() const { return pump_powers_mw.size() * windows_ns.size(); }
};

// Config for grid cell i (power-major order): both pumps at the power, window set.
LinkConfig point_config(const LinkConfig& base, const SweepSpec& spec, std::size_t index);

struct SweepHooks {
  // Returns a cached point to skip the computation.
  std::function<std::optional<RatePoint>(std::size_t)> cached;
  // Called from worker threads after a point completes; must be thread-safe.
  std::function<void(std::size_t, const RatePoint&)> on_point;
};

// One RatePoint per (power, window), power-major. Every point uses the base
// seed. Results do not depend on the thread count.
std::vector<RatePoint> sweep(const SweepSpec& spec, const LinkConfig& cfg, const CampaignOptions& campaign,
                             unsigned threads = 1, const SweepHooks& hooks = {});

struct PhaseRow {
  double offset_rad = 0.0;
  double spi_delta_phi_rad = 0.0;
  double spi_fidelity = 0.0;
  double tpi_fidelity = 0.0;
};

struct CompareReport {
  double click_rate_hz = 0.0;
  double spi_herald_rate_hz = 0.0;
  double tpi_herald_rate_hz = 0.0;
  double ratio = 0.0;  // TPI / SPI
  std::vector<PhaseRow> phase_curve;
  // Delivered TPI ensembles bitwise identical across all offsets.
  bool tpi_phase_invariant = true;
};

// Rates come from one photon stream (the SPI herald count is the click count of
// the TPI run). The phase curve applies each offset to link A.
CompareReport spi_tpi_compare(const LinkConfig& cfg, std::uint64_t frames, std::span<const double> offsets_rad,
                              std::uint64_t phase_frames);

struct MultiplexProjection {
  std::vector<int> usable_modes;
  std::vector<double> edr_hz;
  double cap_hz = 0.0;
  double joint_efficiency = 0.0;
};

// EDR(k) = min(k / base_modes * base.edr_hz, cap), cap = herald rate x mean
// fourfold probability per analyzed herald.
MultiplexProjection multiplexing_projection(const RatePoint& base, std::span<const int> usable_modes,
                                            int base_modes = 1);

// HOM setup matching the link: both sources at their mu, idler arms with
// channel and detector losses, local signal detection at heralding efficiency.
photonics::HomConfig hom_config(const LinkConfig& cfg);

}  // namespace qrlink::analysis
