#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>

#include "doctest.h"
#include "helpers.h"
#include "qrlink/analysis.h"
#include "qrlink/errors.h"

using namespace qrlink;
using namespace qrlink::analysis;
using qstate::BellKind;
using qstate::Observable;
using qstate::Pauli;
using qrlink::testing::exact_counts;
using qrlink::testing::random_state;

namespace {

MeasurementSetting pauli_setting(Pauli a, Pauli b) { return {Observable::from_pauli(a), Observable::from_pauli(b)}; }

LinkConfig small_link() {
  LinkConfig c;
  for (auto* s : {&c.source_a, &c.source_b}) {
    s->pump_power_mw = 3.0;
    s->heralding_efficiency = 0.35;
  }
  c.channel_a.length_km = 7.9;
  c.channel_b.length_km = 9.9;
  c.detectors = {photonics::DetectorConfig{0.56, 100.0}, photonics::DetectorConfig{0.56, 100.0}};
  c.memory_a.storage_efficiency = 0.166;
  c.memory_b.storage_efficiency = 0.157;
  c.verification.efficiency = 0.8;
  c.verification.background_rate_hz = 1000.0;
  c.seed = 77;
  return c;
}

}  // namespace

TEST_CASE("sampled outcomes follow the born rule") {
  Rng rng(1);
  const auto pp = qstate::bell_state(BellKind::PsiPlus);
  const auto zz = sample_outcomes(pp, pauli_setting(Pauli::Z, Pauli::Z), 10000, rng);
  CHECK(zz.n[0] == 0);
  CHECK(zz.n[3] == 0);
  CHECK(std::abs(double(zz.n[1]) - 5000.0) < 200.0);
  const auto xx = sample_outcomes(pp, pauli_setting(Pauli::X, Pauli::X), 10000, rng);
  CHECK(xx.n[1] == 0);
  CHECK(xx.n[2] == 0);
  const auto mm = sample_outcomes(qstate::DensityMatrix::maximally_mixed(), pauli_setting(Pauli::X, Pauli::Z),
                                  40000, rng);
  for (int k = 0; k < 4; ++k) CHECK(std::abs(double(mm.n[k]) - 10000.0) < 4.0 * std::sqrt(7500.0));

  const std::vector<qstate::DensityMatrix> stream(500, pp);
  const auto s = simulate_measurement(stream, pauli_setting(Pauli::Z, Pauli::Z), rng);
  CHECK(s.total() == 500);
  CHECK(s.n[0] + s.n[3] == 0);
}

TEST_CASE("witness estimator on ideal and uniform tallies") {
  OutcomeCounts xx, yy, zz;
  xx.n = {500, 0, 0, 500};
  yy.n = {500, 0, 0, 500};
  zz.n = {0, 500, 500, 0};
  const auto f = estimate_witness(xx, yy, zz, +1);
  CHECK(f.value == doctest::Approx(1.0));
  CHECK(f.err == doctest::Approx(0.0));
  OutcomeCounts u;
  u.n = {250, 250, 250, 250};
  CHECK(estimate_witness(u, u, u, +1).value == doctest::Approx(0.25));
  CHECK_THROWS(estimate_witness(OutcomeCounts{}, u, u, +1));
  CHECK(estimate_chsh(std::array<OutcomeCounts, 4>{u, u, u, u}).value == doctest::Approx(0.0));
  CHECK_THROWS(estimate_chsh(std::array<OutcomeCounts, 4>{u, u, OutcomeCounts{}, u}));
}

TEST_CASE("chsh estimator on exact tallies equals the matrix value") {
  Rng rng(2);
  const auto settings = qstate::standard_chsh_settings();
  for (int i = 0; i < 50; ++i) {
    const auto rho = i == 0 ? qstate::bell_state(BellKind::PsiPlus) : random_state(rng);
    std::array<OutcomeCounts, 4> c;
    for (int k = 0; k < 4; ++k) c[k] = exact_counts(qstate::outcome_probabilities(rho, settings[k]));
    CHECK(std::abs(estimate_chsh(c).value - qstate::chsh_value(rho, settings)) < 1e-9);
  }
  std::array<OutcomeCounts, 4> ideal;
  for (int k = 0; k < 4; ++k)
    ideal[k] = exact_counts(qstate::outcome_probabilities(qstate::bell_state(BellKind::PsiPlus), settings[k]));
  CHECK(estimate_chsh(ideal).value == doctest::Approx(2.0 * std::numbers::sqrt2).epsilon(1e-9));
}

TEST_CASE("witness agrees with the fidelity within three standard errors") {
  Rng pick(3);
  const auto rho = random_state(pick);
  const double truth = qstate::fidelity_to_bell(rho, BellKind::PsiPlus);
  const auto settings = witness_settings();
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto t = measure_settings(rho, settings, 5000, seed);
    const auto e = estimate_witness(t, +1);
    CHECK(std::abs(e.value - truth) < 3.0 * e.err);
  }
}

TEST_CASE("chsh standard error scales as one over root n") {
  const auto rho = qstate::werner(0.8, BellKind::PsiPlus);
  std::vector<double> x, y;
  for (int k = 0; k <= 4; ++k) {
    const std::uint64_t n = 2000ull << k;
    const auto e = estimate_chsh(measure_settings(rho, chsh_settings(), n, 11));
    x.push_back(std::log(double(n)));
    y.push_back(std::log(e.err));
  }
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  CHECK(std::abs(sxy / sxx + 0.5) < 0.05);
}

TEST_CASE("campaigns use one stream per setting") {
  const auto rho = qstate::werner(0.7, BellKind::PsiPlus);
  const auto a = measure_settings(rho, witness_settings(), 1000, 5);
  const auto b = measure_settings(rho, tomography_settings(), 1000, 5);
  // XX drawn in either campaign comes from the same stream.
  CHECK(a.at("XX") == b.at("XX"));
  CHECK(a.at("ZZ") == b.at("ZZ"));
  CHECK(setting_stream("XX") != setting_stream("YY"));
  CHECK(measure_settings(rho, witness_settings(), 1000, 6).at("XX") != a.at("XX"));
}

TEST_CASE("finite-sample tomography") {
  const auto pm = run_tomography(qstate::bell_state(BellKind::PsiMinus), 100000, 1);
  CHECK(pm.fidelity_minus > 0.995);
  const auto w = run_tomography(qstate::werner(0.9, BellKind::PsiPlus), 100000, 2);
  CHECK(std::abs(w.fidelity_plus - 0.925) < 0.01);
  const auto mm = run_tomography(qstate::DensityMatrix::maximally_mixed(), 100000, 3);
  CHECK(std::abs(mm.fidelity_plus - 0.25) < 0.01);
  CHECK(mm.tallies.entries().size() == 9);

  Rng rng(4);
  const std::vector<qstate::DensityMatrix> stream = {qstate::bell_state(BellKind::PsiPlus),
                                                     qstate::werner(0.5, BellKind::PsiPlus)};
  const auto r = run_tomography(stream, 20000, rng);
  CHECK(std::abs(r.fidelity_plus - (1.0 + (3 * 0.5 + 1) / 4) / 2) < 0.02);
  for (const auto& [k, c] : r.tallies.entries()) CHECK(c.total() == 20000);
}

TEST_CASE("edr bookkeeping") {
  CHECK(compute_edr(0.0, 10.0) == 0.0);
  CHECK(compute_edr(5.5, 1000.0) == doctest::Approx(5.5e-3));
  CHECK_THROWS(compute_edr(1.0, 0.0));
  CHECK_THROWS(compute_edr(-1.0, 1.0));
}

TEST_CASE("rate point from a short run") {
  const LinkConfig c = small_link();
  const auto r = run_point(c, 2000, CampaignOptions{4000});
  CHECK(r.point.power_mw == 3.0);
  CHECK(r.point.window_ns == 20.0);
  CHECK(r.point.herald_hz == doctest::Approx(r.summary.herald_rate_hz()));
  CHECK(r.point.edr_hz == doctest::Approx(r.summary.expected_edr_hz()));
  REQUIRE(r.point.has_state);
  CHECK(r.point.exact_fidelity == doctest::Approx(qstate::fidelity_to_bell(*r.state, BellKind::PsiPlus)));
  CHECK(std::abs(r.point.fidelity - r.point.exact_fidelity) < 4.0 * r.point.fidelity_err);
  CHECK(r.tallies.entries().size() == 7);
  CHECK(r.point.sig_sigma == doctest::Approx((r.point.chsh - 2.0) / r.point.chsh_err));
  const auto again = evaluate_point(c, r.summary, CampaignOptions{4000});
  CHECK(again.point == r.point);
}

TEST_CASE("one-by-one sweep reproduces the single run") {
  const LinkConfig c = small_link();
  SweepSpec spec{{3.0}, {20.0}, 1500};
  const auto pts = sweep(spec, c, CampaignOptions{3000});
  REQUIRE(pts.size() == 1);
  CHECK(pts[0] == run_point(c, 1500, CampaignOptions{3000}).point);
}

TEST_CASE("sweep grid order, threads and caching") {
  const LinkConfig c = small_link();
  SweepSpec spec{{1.0, 3.0}, {10.0, 30.0}, 300};
  const auto one = sweep(spec, c, CampaignOptions{1000}, 1);
  const auto three = sweep(spec, c, CampaignOptions{1000}, 3);
  REQUIRE(one.size() == 4);
  CHECK(one == three);
  CHECK(one[1].power_mw == 1.0);
  CHECK(one[1].window_ns == 30.0);
  CHECK(one[2].power_mw == 3.0);
  CHECK(point_config(c, spec, 3).protocol.coincidence_window_ns == 30.0);
  CHECK(point_config(c, spec, 3).source_b.pump_power_mw == 3.0);

  SweepHooks hooks;
  int computed = 0;
  hooks.cached = [&](std::size_t i) -> std::optional<RatePoint> {
    if (i == 0) return one[0];
    return std::nullopt;
  };
  hooks.on_point = [&](std::size_t, const RatePoint&) { ++computed; };
  CHECK(sweep(spec, c, CampaignOptions{1000}, 2, hooks) == one);
  CHECK(computed == 3);

  spec.windows_ns.clear();
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("pooled half runs match single runs in distribution") {
  // Herald category counts of one N-frame run against two pooled N/2-frame
  // runs with other seeds; chi-square homogeneity summed over 20 repetitions.
  LinkConfig c = small_link();
  const std::uint64_t frames = 600;
  auto categories = [&](std::uint64_t seed, std::uint64_t n) {
    LinkConfig k = c;
    k.seed = seed;
    std::array<double, 4> out{};
    linksim::RunObserver obs;
    obs.log_frames = n;
    obs.on_herald = [&](const linksim::HeraldRecord& h) { out[static_cast<int>(h.category)] += 1.0; };
    linksim::run_link(k, n, obs);
    return out;
  };
  double chi2 = 0.0;
  int df = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const auto single = categories(1000 + rep, frames);
    const auto a = categories(2000 + rep, frames / 2);
    const auto b = categories(3000 + rep, frames / 2);
    std::array<double, 4> pooled{};
    for (int k = 0; k < 4; ++k) pooled[k] = a[k] + b[k];
    const double n1 = std::accumulate(single.begin(), single.end(), 0.0);
    const double n2 = std::accumulate(pooled.begin(), pooled.end(), 0.0);
    for (int k = 0; k < 4; ++k) {
      const double col = single[k] + pooled[k];
      if (col == 0.0) continue;
      const double e1 = col * n1 / (n1 + n2), e2 = col * n2 / (n1 + n2);
      chi2 += (single[k] - e1) * (single[k] - e1) / e1 + (pooled[k] - e2) * (pooled[k] - e2) / e2;
      ++df;
    }
    --df;
  }
  const boost::math::chi_squared dist(df);
  const double p = boost::math::cdf(boost::math::complement(dist, chi2));
  INFO("chi2=" << chi2 << " df=" << df << " p=" << p);
  CHECK(p > 0.01);
}

TEST_CASE("multiplexing projection is linear then capped") {
  RatePoint base;
  base.herald_hz = 23600.0;
  base.analyzed_hz = 100.0;
  base.edr_hz = 0.0055;
  const int modes[] = {1, 2, 4, 100, 1204, 1000000, 2000000};
  const auto m = multiplexing_projection(base, modes);
  CHECK(m.joint_efficiency == doctest::Approx(0.0055 / 100.0));
  CHECK(m.cap_hz == doctest::Approx(23600.0 * 0.0055 / 100.0));
  CHECK(m.edr_hz[0] == base.edr_hz);
  CHECK(m.edr_hz[1] == 2.0 * base.edr_hz);
  CHECK(m.edr_hz[3] == 100.0 * base.edr_hz);
  CHECK(m.edr_hz[4] == m.cap_hz);
  CHECK(m.edr_hz[5] == m.cap_hz);
  CHECK(m.edr_hz[6] == m.cap_hz);
  const auto rebased = multiplexing_projection(base, modes, 2);
  CHECK(rebased.edr_hz[1] == base.edr_hz);
  CHECK_THROWS(multiplexing_projection(base, modes, 0));
}

TEST_CASE("spi versus tpi comparison") {
  const LinkConfig c = small_link();
  const double offsets[] = {0.0, 0.4, 1.3};
  const auto r = spi_tpi_compare(c, 300, offsets, 200);
  CHECK(r.spi_herald_rate_hz == r.click_rate_hz);
  CHECK(r.ratio == doctest::Approx(r.tpi_herald_rate_hz / r.spi_herald_rate_hz));
  CHECK(r.ratio > 0.40);
  CHECK(r.ratio <= 0.50);
  CHECK(r.tpi_phase_invariant);
  REQUIRE(r.phase_curve.size() == 3);
  for (const auto& row : r.phase_curve) {
    CHECK(row.spi_delta_phi_rad == doctest::Approx(row.offset_rad));
    CHECK(row.tpi_fidelity == r.phase_curve[0].tpi_fidelity);
  }
  CHECK(r.phase_curve[2].spi_fidelity < r.phase_curve[0].spi_fidelity);
}

TEST_CASE("hom configuration mirrors the link") {
  const LinkConfig c = small_link();
  const auto h = hom_config(c);
  CHECK(h.mu == doctest::Approx(0.01494));
  CHECK(h.idler_efficiency_b == doctest::Approx(c.idler_transmission(linksim::Node::B) * 0.56));
  CHECK(h.signal_efficiency_a == 0.35);
}
