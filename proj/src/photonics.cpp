#include "qrlink/photonics.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "qrlink/errors.h"

namespace qrlink::photonics {

namespace {

void require_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigError(std::string(what) + " must lie in [0, 1]");
  }
}

void require_non_negative(double v, const char* what) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw ConfigError(std::string(what) + " must be a finite non-negative number");
  }
}

double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

double binomial_pmf(int n, int k, double p) {
  if (k < 0 || k > n) return 0.0;
  if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return k == n ? 1.0 : 0.0;
  return std::exp(log_factorial(n) - log_factorial(k) - log_factorial(n - k) + k * std::log(p) +
                  (n - k) * std::log1p(-p));
}

// Output distribution over D1 photon number k for n identical photons in port A
// and m in port B: a -> (c + d)/sqrt2, b -> (c - d)/sqrt2.
std::vector<double> identical_routing(int n, int m) {
  const int total = n + m;
  std::vector<double> probs(total + 1, 0.0);
  for (int k = 0; k <= total; ++k) {
    double coef = 0.0;
    for (int i = std::max(0, k - m); i <= std::min(n, k); ++i) {
      const int j = k - i;
      const double sign = ((m - j) % 2 == 0) ? 1.0 : -1.0;
      coef += sign * std::exp(log_factorial(n) - log_factorial(i) - log_factorial(n - i) +
                              log_factorial(m) - log_factorial(j) - log_factorial(m - j));
    }
    const double log_norm = 0.5 * (log_factorial(k) + log_factorial(total - k) - log_factorial(n) -
                                   log_factorial(m)) -
                            0.5 * total * std::log(2.0);
    const double amp = coef * std::exp(log_norm);
    probs[k] = amp * amp;
  }
  return probs;
}

int sample_index(const std::vector<double>& probs, Rng& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double u = uni(rng);
  for (std::size_t k = 0; k < probs.size(); ++k) {
    u -= probs[k];
    if (u < 0.0) return static_cast<int>(k);
  }
  // Rounding residue; fall back to the last populated entry.
  for (std::size_t k = probs.size(); k-- > 0;) {
    if (probs[k] > 0.0) return static_cast<int>(k);
  }
  return 0;
}

int truncation_for(double mu, PhotonStatistics stats) {
  if (stats == PhotonStatistics::SinglePair) return 1;
  int n = 1;
  double tail = 1.0;
  while (n < 60) {
    tail = 0.0;
    // Remaining mass beyond n given n >= 1.
    double acc = 0.0;
    for (int k = 1; k <= n; ++k) acc += pair_count_probability(mu, k, stats);
    tail = 1.0 - acc / occupied_probability(mu, stats);
    if (tail < 1e-14) break;
    ++n;
  }
  return n;
}

}  // namespace

void SourceConfig::validate() const {
  require_non_negative(pair_rate_per_mw_hz, "pair_rate_per_mw_hz");
  require_non_negative(pump_power_mw, "pump_power_mw");
  require_probability(heralding_efficiency, "heralding_efficiency");
  require_probability(indistinguishability, "indistinguishability");
}

void ChannelConfig::validate() const {
  require_non_negative(length_km, "length_km");
  require_non_negative(attenuation_db_per_km, "attenuation_db_per_km");
  require_non_negative(extra_loss_db, "extra_loss_db");
  if (!(delay_us_per_km > 0.0)) {
    throw ConfigError("delay_us_per_km must be positive");
  }
}

void DetectorConfig::validate() const {
  require_probability(efficiency, "detector efficiency");
  require_non_negative(dark_rate_hz, "dark_rate_hz");
}

int TemporalGrid::mode_count() const {
  return static_cast<int>(std::floor(frame_duration_us * 1000.0 / mode_duration_ns + 1e-9));
}

double TemporalGrid::wavepacket_decay_ns() const {
  return mode_duration_ns / (2.0 * std::log(1.0 / (1.0 - mode_coverage)));
}

void TemporalGrid::validate() const {
  if (!(mode_duration_ns > 0.0) || !(frame_duration_us > 0.0)) {
    throw ConfigError("mode and frame durations must be positive");
  }
  if (!(mode_coverage > 0.0 && mode_coverage < 1.0)) {
    throw ConfigError("mode_coverage must lie in (0, 1)");
  }
  if (mode_count() < 1) {
    throw ConfigError("frame shorter than one temporal mode");
  }
}

double mean_pairs_per_mode(const SourceConfig& src, const TemporalGrid& grid) {
  return src.pair_rate_per_mw_hz * src.pump_power_mw * grid.mode_duration_ns * 1e-9;
}

double pair_count_probability(double mu, int n, PhotonStatistics stats) {
  if (n < 0) return 0.0;
  switch (stats) {
    case PhotonStatistics::Thermal:
      return std::pow(mu, n) / std::pow(1.0 + mu, n + 1);
    case PhotonStatistics::Poisson:
      return mu == 0.0 ? (n == 0 ? 1.0 : 0.0)
                       : std::exp(-mu + n * std::log(mu) - log_factorial(n));
    case PhotonStatistics::SinglePair:
      return n == 1 ? 1.0 : 0.0;
  }
  return 0.0;
}

double occupied_probability(double mu, PhotonStatistics stats) {
  switch (stats) {
    case PhotonStatistics::Thermal:
      return mu / (1.0 + mu);
    case PhotonStatistics::Poisson:
      return -std::expm1(-mu);
    case PhotonStatistics::SinglePair:
      return 1.0;
  }
  return 0.0;
}

int sample_pair_count(double mu, Rng& rng, PhotonStatistics stats) {
  if (!(mu >= 0.0)) throw std::invalid_argument("mean pair number must be non-negative");
  switch (stats) {
    case PhotonStatistics::Thermal: {
      std::geometric_distribution<int> geo(1.0 / (1.0 + mu));
      return geo(rng);
    }
    case PhotonStatistics::Poisson: {
      if (mu == 0.0) return 0;
      std::poisson_distribution<int> poi(mu);
      return poi(rng);
    }
    case PhotonStatistics::SinglePair:
      return 1;
  }
  return 0;
}

int sample_occupied_pair_count(double mu, Rng& rng, PhotonStatistics stats) {
  switch (stats) {
    case PhotonStatistics::Thermal: {
      // Memorylessness: n - 1 given n >= 1 is again thermal with the same mean.
      std::geometric_distribution<int> geo(1.0 / (1.0 + mu));
      return 1 + geo(rng);
    }
    case PhotonStatistics::Poisson: {
      std::uniform_real_distribution<double> uni(0.0, 1.0);
      double u = uni(rng) * occupied_probability(mu, stats);
      int n = 1;
      for (;; ++n) {
        u -= pair_count_probability(mu, n, stats);
        if (u <= 0.0 || n > 200) break;
      }
      return n;
    }
    case PhotonStatistics::SinglePair:
      return 1;
  }
  return 1;
}

double survival_probability(const ChannelConfig& ch) {
  return std::pow(10.0, -(ch.length_km * ch.attenuation_db_per_km + ch.extra_loss_db) / 10.0);
}

double propagation_delay_us(const ChannelConfig& ch) { return ch.length_km * ch.delay_us_per_km; }

int thin(int photon_count, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("thinning probability outside [0, 1]");
  if (photon_count <= 0 || p == 0.0) return 0;
  if (p == 1.0) return photon_count;
  std::binomial_distribution<int> bin(photon_count, p);
  return bin(rng);
}

std::vector<BsmBranch> bsm_output_distribution(int n_a, int n_b, double v) {
  if (n_a < 0 || n_b < 0) throw std::invalid_argument("photon numbers must be non-negative");
  if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("indistinguishability outside [0, 1]");
  const int total = n_a + n_b;
  std::vector<double> p_d1(total + 1, 0.0);
  for (int j = 0; j <= n_b; ++j) {
    const double w = binomial_pmf(n_b, j, v);
    if (w == 0.0) continue;
    const std::vector<double> ident = identical_routing(n_a, j);
    const int rest = n_b - j;
    for (std::size_t k = 0; k < ident.size(); ++k) {
      if (ident[k] == 0.0) continue;
      for (int r = 0; r <= rest; ++r) {
        p_d1[k + r] += w * ident[k] * binomial_pmf(rest, r, 0.5);
      }
    }
  }
  std::vector<BsmBranch> out;
  for (int k = 0; k <= total; ++k) {
    if (p_d1[k] > 0.0) out.push_back({BsmOutcome{k, total - k}, p_d1[k]});
  }
  return out;
}

BsmOutcome bsm_interfere(int n_a, int n_b, double v, Rng& rng) {
  if (n_a < 0 || n_b < 0) throw std::invalid_argument("photon numbers must be non-negative");
  if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("indistinguishability outside [0, 1]");
  const int total = n_a + n_b;
  if (total == 0) return {};
  if (n_a == 0 || n_b == 0) {
    const int d1 = thin(total, 0.5, rng);
    return {d1, total - d1};
  }
  const int ident_b = thin(n_b, v, rng);
  const int rest = n_b - ident_b;
  const int k = sample_index(identical_routing(n_a, ident_b), rng);
  const int d1 = k + thin(rest, 0.5, rng);
  return {d1, total - d1};
}

int sample_dark_counts(const DetectorConfig& det, double window_ns, Rng& rng) {
  if (!(window_ns >= 0.0)) throw std::invalid_argument("window must be non-negative");
  const double mean = det.dark_rate_hz * window_ns * 1e-9;
  if (mean <= 0.0) return 0;
  std::poisson_distribution<int> poi(mean);
  return poi(rng);
}

void HomConfig::validate() const {
  require_non_negative(mu, "mu");
  require_probability(indistinguishability, "indistinguishability");
  require_probability(idler_efficiency_a, "idler_efficiency_a");
  require_probability(idler_efficiency_b, "idler_efficiency_b");
  require_probability(signal_efficiency_a, "signal_efficiency_a");
  require_probability(signal_efficiency_b, "signal_efficiency_b");
  if (!(coherence_time_ns > 0.0)) throw ConfigError("coherence_time_ns must be positive");
  if (statistics != PhotonStatistics::SinglePair && !(mu > 0.0)) {
    throw ConfigError("HOM with random pair statistics needs mu > 0");
  }
}

double hom_overlap(const HomConfig& cfg, double delay_ns) {
  return cfg.indistinguishability * std::exp(-std::abs(delay_ns) / cfg.coherence_time_ns);
}

double hom_fourfold_probability(const HomConfig& cfg, double overlap) {
  cfg.validate();
  const int nmax = truncation_for(cfg.mu, cfg.statistics);
  const double occ = occupied_probability(cfg.mu, cfg.statistics);
  std::map<std::pair<int, int>, double> coincidence_cache;
  auto coincidence = [&](int ka, int kb) {
    auto key = std::make_pair(ka, kb);
    auto it = coincidence_cache.find(key);
    if (it != coincidence_cache.end()) return it->second;
    double p = 0.0;
    for (const auto& br : bsm_output_distribution(ka, kb, overlap)) {
      if (br.out.d1 > 0 && br.out.d2 > 0) p += br.probability;
    }
    coincidence_cache.emplace(key, p);
    return p;
  };
  double total = 0.0;
  for (int na = 1; na <= nmax; ++na) {
    const double wa = pair_count_probability(cfg.mu, na, cfg.statistics) / occ;
    const double ha = 1.0 - std::pow(1.0 - cfg.signal_efficiency_a, na);
    for (int nb = 1; nb <= nmax; ++nb) {
      const double wb = pair_count_probability(cfg.mu, nb, cfg.statistics) / occ;
      const double hb = 1.0 - std::pow(1.0 - cfg.signal_efficiency_b, nb);
      double c = 0.0;
      for (int ka = 0; ka <= na; ++ka) {
        const double pa = binomial_pmf(na, ka, cfg.idler_efficiency_a);
        if (pa == 0.0) continue;
        for (int kb = 0; kb <= nb; ++kb) {
          const double pb = binomial_pmf(nb, kb, cfg.idler_efficiency_b);
          if (pb == 0.0 || ka + kb < 2) continue;
          c += pa * pb * coincidence(ka, kb);
        }
      }
      total += wa * wb * ha * hb * c;
    }
  }
  return total;
}

double hom_expected_visibility(const HomConfig& cfg) {
  const double far = hom_fourfold_probability(cfg, 0.0);
  const double dip = hom_fourfold_probability(cfg, cfg.indistinguishability);
  return far > 0.0 ? (far - dip) / far : 0.0;
}

std::vector<HomPoint> hom_dip_experiment(const HomConfig& cfg, std::span<const double> delays_ns,
                                         std::uint64_t trials, Rng& rng) {
  cfg.validate();
  if (trials < 1) throw std::invalid_argument("HOM experiment needs at least one trial");
  auto run_block = [&](double overlap) {
    std::uint64_t hits = 0;
    for (std::uint64_t t = 0; t < trials; ++t) {
      const int na = sample_occupied_pair_count(cfg.mu, rng, cfg.statistics);
      const int nb = sample_occupied_pair_count(cfg.mu, rng, cfg.statistics);
      const bool herald_a = thin(na, cfg.signal_efficiency_a, rng) > 0;
      const bool herald_b = thin(nb, cfg.signal_efficiency_b, rng) > 0;
      const int ka = thin(na, cfg.idler_efficiency_a, rng);
      const int kb = thin(nb, cfg.idler_efficiency_b, rng);
      const BsmOutcome out = bsm_interfere(ka, kb, overlap, rng);
      if (herald_a && herald_b && out.d1 > 0 && out.d2 > 0) ++hits;
    }
    return hits;
  };
  const std::uint64_t far_hits = run_block(0.0);
  const double far_rate = static_cast<double>(far_hits) / static_cast<double>(trials);
  std::vector<HomPoint> points;
  points.reserve(delays_ns.size());
  for (double tau : delays_ns) {
    HomPoint p;
    p.delay_ns = tau;
    p.trials = trials;
    p.coincidences = run_block(hom_overlap(cfg, tau));
    const double rate = static_cast<double>(p.coincidences) / static_cast<double>(trials);
    p.visibility = far_rate > 0.0 ? (far_rate - rate) / far_rate : 0.0;
    points.push_back(p);
  }
  return points;
}

double calibrate_indistinguishability(HomConfig cfg, double target_visibility) {
  cfg.indistinguishability = 1.0;
  if (hom_expected_visibility(cfg) < target_visibility) {
    throw ConfigError("target HOM visibility is unreachable at this mean pair number");
  }
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < 60; ++it) {
    cfg.indistinguishability = 0.5 * (lo + hi);
    if (hom_expected_visibility(cfg) < target_visibility) {
      lo = cfg.indistinguishability;
    } else {
      hi = cfg.indistinguishability;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace qrlink::photonics
