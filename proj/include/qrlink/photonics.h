#pragma once

// Stochastic models of the photon-pair sources, fiber channels, click
// detectors and the two-photon interference at the Bell-state-measurement
// beamsplitter.

#include <cstdint>
#include <span>
#include <vector>

#include "qrlink/rng.h"

namespace qrlink::photonics {

enum class PhotonStatistics { Thermal, Poisson, SinglePair };

struct SourceConfig {
  double pair_rate_per_mw_hz = 60e3;
  double pump_power_mw = 3.0;
  // Per-arm collection efficiency; applied to both the idler and the signal photon.
  double heralding_efficiency = 0.35;
  // Squared overlap of the two nodes' idler wavepackets.
  double indistinguishability = 1.0;
  PhotonStatistics statistics = PhotonStatistics::Thermal;

  void validate() const;
};

struct ChannelConfig {
  double length_km = 0.0;
  double attenuation_db_per_km = 0.2;
  double extra_loss_db = 0.0;
  double delay_us_per_km = 5.0;

  void validate() const;
};

struct DetectorConfig {
  double efficiency = 1.0;
  double dark_rate_hz = 0.0;

  void validate() const;
};

struct TemporalGrid {
  double mode_duration_ns = 83.0;
  double frame_duration_us = 100.0;
  // Fraction of a photon wavepacket contained in one mode duration.
  double mode_coverage = 0.9;

  int mode_count() const;
  // Decay time of the two-sided exponential wavepacket that puts mode_coverage
  // of its weight inside +-mode_duration/2.
  double wavepacket_decay_ns() const;
  void validate() const;
};

double mean_pairs_per_mode(const SourceConfig& src, const TemporalGrid& grid);

// P(n) for the given statistics; SinglePair ignores mu and returns n = 1.
double pair_count_probability(double mu, int n, PhotonStatistics stats = PhotonStatistics::Thermal);
int sample_pair_count(double mu, Rng& rng, PhotonStatistics stats = PhotonStatistics::Thermal);
// Probability that a mode holds at least one pair.
double occupied_probability(double mu, PhotonStatistics stats = PhotonStatistics::Thermal);
// Sample n given n >= 1.
int sample_occupied_pair_count(double mu, Rng& rng, PhotonStatistics stats = PhotonStatistics::Thermal);

double survival_probability(const ChannelConfig& ch);
double propagation_delay_us(const ChannelConfig& ch);

int thin(int photon_count, double p, Rng& rng);

struct BsmOutcome {
  int d1 = 0;
  int d2 = 0;
  bool operator==(const BsmOutcome&) const = default;
};

struct BsmBranch {
  BsmOutcome out;
  double probability;
};

// Exact output photon-number distribution of a balanced beamsplitter fed with
// n_a photons in one wavepacket mode and n_b in another, squared overlap V.
// Each port-B photon is decomposed into a component identical to port A's mode
// (weight V) and an orthogonal one; the branches never interfere, so the result
// is a binomial mixture of identical-photon routing and independent 50/50
// routing.
std::vector<BsmBranch> bsm_output_distribution(int n_a, int n_b, double indistinguishability);

BsmOutcome bsm_interfere(int n_a, int n_b, double indistinguishability, Rng& rng);

int sample_dark_counts(const DetectorConfig& det, double window_ns, Rng& rng);

struct HomConfig {
  double mu = 0.0;
  PhotonStatistics statistics = PhotonStatistics::Thermal;
  double indistinguishability = 1.0;
  // Overall idler efficiency per arm up to and including the click detector at C.
  double idler_efficiency_a = 1.0;
  double idler_efficiency_b = 1.0;
  // Local signal detection efficiency per node (fourfold heralding).
  double signal_efficiency_a = 1.0;
  double signal_efficiency_b = 1.0;
  double coherence_time_ns = 100.0;

  void validate() const;
};

struct HomPoint {
  double delay_ns = 0.0;
  std::uint64_t coincidences = 0;
  std::uint64_t trials = 0;
  double visibility = 0.0;  // (R_far - R(delay)) / R_far
};

// Effective overlap at relative delay tau: V * exp(-|tau| / coherence_time).
double hom_overlap(const HomConfig& cfg, double delay_ns);

// Fourfold coincidence probability per trial at a given overlap, conditioned on
// both sources emitting at least one pair. Exact up to photon-number truncation.
double hom_fourfold_probability(const HomConfig& cfg, double overlap);

// (P_far - P_0) / P_far with P_far evaluated at zero overlap.
double hom_expected_visibility(const HomConfig& cfg);

// Monte Carlo dip. Trials are drawn conditioned on both sources emitting (the
// conditioning cancels in the visibility ratio). The reference rate R_far uses
// a separate block of trials with interference switched off.
std::vector<HomPoint> hom_dip_experiment(const HomConfig& cfg, std::span<const double> delays_ns,
                                         std::uint64_t trials, Rng& rng);

// Bisection on the indistinguishability so that hom_expected_visibility hits the target.
double calibrate_indistinguishability(HomConfig cfg, double target_visibility);

}  // namespace qrlink::photonics
