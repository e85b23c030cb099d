#include <cmath>
#include <numbers>

#include "doctest.h"
#include "helpers.h"
#include "qrlink/qstate.h"

using namespace qrlink;
using namespace qrlink::qstate;
using qrlink::testing::exact_counts;
using qrlink::testing::golden;
using qrlink::testing::max_abs_diff;
using qrlink::testing::random_state;
using qrlink::testing::slurp;

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;

DensityMatrix load_golden(const std::string& name) { return DensityMatrix::parse(slurp(golden(name))); }

TallyTable exact_tomography_tallies(const DensityMatrix& rho) {
  TallyTable t;
  for (const auto& l : tomography_labels()) {
    const MeasurementSetting s{Observable::from_pauli(l.a), Observable::from_pauli(l.b)};
    t[l.key()] = exact_counts(outcome_probabilities(rho, s));
  }
  return t;
}

}  // namespace

TEST_CASE("bell states match the golden matrices") {
  CHECK(max_abs_diff(bell_state(BellKind::PsiPlus).matrix(), load_golden("psi_plus.dm").matrix()) == 0.0);
  CHECK(max_abs_diff(bell_state(BellKind::PsiMinus).matrix(), load_golden("psi_minus.dm").matrix()) == 0.0);
  CHECK(max_abs_diff(DensityMatrix::maximally_mixed().matrix(), load_golden("maximally_mixed.dm").matrix()) == 0.0);
  CHECK(max_abs_diff(werner(0.8, BellKind::PsiPlus).matrix(), load_golden("werner_0.8_psi_plus.dm").matrix()) <
        1e-15);
}

TEST_CASE("serialize and parse round trip bit for bit") {
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    const auto rho = random_state(rng);
    const auto back = DensityMatrix::parse(rho.serialize());
    CHECK(back.matrix() == rho.matrix());
    CHECK(back.serialize() == rho.serialize());
  }
  CHECK_THROWS_AS(DensityMatrix::parse("0,0 0,0"), std::invalid_argument);
  CHECK_THROWS_AS(DensityMatrix::parse(slurp(golden("psi_plus.dm")) + " 0,0"), std::invalid_argument);
  CHECK_THROWS_AS(DensityMatrix::parse("1 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0"), std::invalid_argument);
}

TEST_CASE("density matrix invariants are enforced") {
  Matrix4 m = Matrix4::Zero();
  m(0, 0) = 1.0;
  CHECK_NOTHROW(validate_density(m));
  m(0, 1) = 0.1;
  CHECK_THROWS_AS(validate_density(m), std::invalid_argument);  // not Hermitian
  m = Matrix4::Identity() * 0.3;
  CHECK_THROWS_AS(validate_density(m), std::invalid_argument);  // trace 1.2
  m = Matrix4::Zero();
  m(0, 0) = 1.5;
  m(1, 1) = -0.5;
  CHECK_THROWS_AS(validate_density(m), std::invalid_argument);  // negative eigenvalue
  CHECK_THROWS_AS(werner(1.1, BellKind::PsiPlus), std::invalid_argument);
  CHECK_THROWS_AS(werner(-0.1, BellKind::PsiPlus), std::invalid_argument);
}

TEST_CASE("pauli correlators of the bell states") {
  const auto pp = bell_state(BellKind::PsiPlus);
  const Observable X = Observable::from_pauli(Pauli::X);
  const Observable Y = Observable::from_pauli(Pauli::Y);
  const Observable Z = Observable::from_pauli(Pauli::Z);
  CHECK(expectation(pp, Z, Z) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(expectation(pp, X, X) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(expectation(pp, Y, Y) == doctest::Approx(1.0).epsilon(1e-12));
  const auto pm = bell_state(BellKind::PsiMinus);
  CHECK(expectation(pm, X, X) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(expectation(pm, Y, Y) == doctest::Approx(-1.0).epsilon(1e-12));
  const auto mm = DensityMatrix::maximally_mixed();
  for (auto a : {Pauli::X, Pauli::Y, Pauli::Z})
    for (auto b : {Pauli::X, Pauli::Y, Pauli::Z}) CHECK(std::abs(expectation(mm, PauliLabel{a, b})) < 1e-15);

  Matrix2 bad;
  bad << 0, 1, 0, 0;
  CHECK_THROWS_AS(expectation(pp, bad, pauli_matrix(Pauli::Z)), std::invalid_argument);
  Matrix2 not_involution = 2.0 * pauli_matrix(Pauli::Z);
  CHECK_THROWS_AS(expectation(pp, not_involution, pauli_matrix(Pauli::Z)), std::invalid_argument);
}

TEST_CASE("witness formula on ideal correlators") {
  CHECK(witness_fidelity(1, 1, -1, +1) == doctest::Approx(1.0));
  CHECK(witness_fidelity(0, 0, 0, +1) == doctest::Approx(0.25));
  CHECK(witness_fidelity(-1, -1, -1, -1) == doctest::Approx(1.0));
  CHECK_THROWS_AS(witness_fidelity(1.2, 0, 0, +1), std::invalid_argument);
  CHECK_THROWS_AS(witness_fidelity(0, 0, 0, 2), std::invalid_argument);
}

TEST_CASE("witness equals bell fidelity for random states") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const auto rho = random_state(rng, 1 + i % 4);
    const double xx = expectation(rho, PauliLabel{Pauli::X, Pauli::X});
    const double yy = expectation(rho, PauliLabel{Pauli::Y, Pauli::Y});
    const double zz = expectation(rho, PauliLabel{Pauli::Z, Pauli::Z});
    CHECK(std::abs(witness_fidelity(xx, yy, zz, +1) - fidelity_to_bell(rho, BellKind::PsiPlus)) < 1e-10);
    CHECK(std::abs(witness_fidelity(xx, yy, zz, -1) - fidelity_to_bell(rho, BellKind::PsiMinus)) < 1e-10);
  }
}

TEST_CASE("chsh at the standard settings") {
  const auto s = standard_chsh_settings();
  CHECK(chsh_value(bell_state(BellKind::PsiPlus), s) == doctest::Approx(2.0 * kSqrt2).epsilon(1e-12));
  CHECK(std::abs(chsh_value(DensityMatrix::maximally_mixed(), s)) < 1e-15);
  CHECK(chsh_value(werner(1.0 / kSqrt2, BellKind::PsiPlus), s) == doctest::Approx(2.0).epsilon(1e-12));

  // Independent oracle: S from explicit Kronecker products.
  const Matrix2 X = pauli_matrix(Pauli::X), Z = pauli_matrix(Pauli::Z);
  const Matrix2 A0 = (Z + X) / kSqrt2, A1 = (Z - X) / kSqrt2, B0 = -Z, B1 = X;
  auto kron = [](const Matrix2& a, const Matrix2& b) {
    Matrix4 k;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) k.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
    return k;
  };
  const Matrix4 op = kron(A0, B0) + kron(A0, B1) + kron(A1, B0) - kron(A1, B1);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto rho = random_state(rng);
    CHECK(std::abs(chsh_value(rho, s) - (rho.matrix() * op).trace().real()) < 1e-12);
  }
}

TEST_CASE("werner chsh is linear in p") {
  for (int k = 0; k <= 10; ++k) {
    const double p = k / 10.0;
    const auto w = werner(p, BellKind::PsiPlus);
    CHECK(std::abs(chsh_value(w, standard_chsh_settings()) - 2.0 * kSqrt2 * p) < 1e-9);
    CHECK(std::abs(fidelity_to_bell(w, BellKind::PsiPlus) - (3.0 * p + 1.0) / 4.0) < 1e-12);
  }
  CHECK(fidelity_to_bell(werner(1.0 / kSqrt2, BellKind::PsiPlus), BellKind::PsiPlus) ==
        doctest::Approx((3.0 / kSqrt2 + 1.0) / 4.0));
  CHECK(max_abs_diff(werner(1.0, BellKind::PsiMinus).matrix(), bell_state(BellKind::PsiMinus).matrix()) < 1e-15);
  CHECK(max_abs_diff(werner(0.0, BellKind::PsiMinus).matrix(), DensityMatrix::maximally_mixed().matrix()) < 1e-15);
}

TEST_CASE("tsirelson bound on random states and random settings") {
  Rng rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto obs = [&] { return Observable::from_bloch(u(rng), u(rng), u(rng)); };
  for (int i = 0; i < 1000; ++i) {
    const auto rho = random_state(rng, 1 + i % 4);
    const ChshSettings s = {MeasurementSetting{obs(), obs()}, MeasurementSetting{obs(), obs()},
                            MeasurementSetting{obs(), obs()}, MeasurementSetting{obs(), obs()}};
    // The four settings share A0, A1, B0, B1.
    const ChshSettings shared = {MeasurementSetting{s[0].a, s[0].b}, MeasurementSetting{s[0].a, s[1].b},
                                 MeasurementSetting{s[1].a, s[0].b}, MeasurementSetting{s[1].a, s[1].b}};
    CHECK(std::abs(chsh_value(rho, shared)) <= 2.0 * kSqrt2 + 1e-9);
    CHECK(std::abs(chsh_value(rho, standard_chsh_settings())) <= 2.0 * kSqrt2 + 1e-9);
  }
}

TEST_CASE("phase flip at A is an involution swapping psi+ and psi-") {
  const auto pp = bell_state(BellKind::PsiPlus);
  const auto pm = bell_state(BellKind::PsiMinus);
  CHECK(fidelity_to_bell(apply_phase_flip_A(pm), BellKind::PsiPlus) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(max_abs_diff(apply_phase_flip_A(pp).matrix(), pm.matrix()) < 1e-15);
  CHECK(max_abs_diff(apply_phase_flip_A(DensityMatrix::maximally_mixed()).matrix(),
                     DensityMatrix::maximally_mixed().matrix()) < 1e-15);
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const auto rho = random_state(rng);
    CHECK(max_abs_diff(apply_phase_flip_A(apply_phase_flip_A(rho)).matrix(), rho.matrix()) < 1e-12);
  }
}

TEST_CASE("relative dephasing follows the cos^2 law") {
  const auto pp = bell_state(BellKind::PsiPlus);
  CHECK(max_abs_diff(dephase_relative(pp, 0.0).matrix(), pp.matrix()) < 1e-15);
  CHECK(fidelity_to_bell(dephase_relative(pp, std::numbers::pi), BellKind::PsiMinus) ==
        doctest::Approx(1.0).epsilon(1e-12));
  // A quarter turn leaves psi+ and psi- equally likely.
  CHECK(fidelity_to_bell(dephase_relative(pp, std::numbers::pi / 2), BellKind::PsiPlus) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(max_abs_diff(dephase_relative(pp, std::numbers::pi / 2).matrix(),
                     load_golden("psi_plus_dephased_half_pi.dm").matrix()) < 1e-15);
  for (double phi = -3.0; phi <= 3.0; phi += 0.25) {
    const double f = fidelity_to_bell(dephase_relative(pp, phi), BellKind::PsiPlus);
    CHECK(f == doctest::Approx(std::pow(std::cos(phi / 2.0), 2)).epsilon(1e-12));
  }
}

TEST_CASE("bell fidelity and uhlmann fidelity agree on pure targets") {
  CHECK(fidelity_to_bell(bell_state(BellKind::PsiPlus), BellKind::PsiPlus) == doctest::Approx(1.0));
  CHECK(std::abs(fidelity_to_bell(bell_state(BellKind::PsiMinus), BellKind::PsiPlus)) < 1e-15);
  Rng rng(21);
  for (int i = 0; i < 50; ++i) {
    const auto rho = random_state(rng);
    CHECK(uhlmann_fidelity(rho, bell_state(BellKind::PsiPlus)) ==
          doctest::Approx(fidelity_to_bell(rho, BellKind::PsiPlus)).epsilon(1e-7));
    CHECK(trace_distance(rho, rho) < 1e-12);
  }
  CHECK(trace_distance(bell_state(BellKind::PsiPlus), bell_state(BellKind::PsiMinus)) == doctest::Approx(1.0));
}

TEST_CASE("mixture renormalizes and rejects bad weights") {
  const std::pair<double, DensityMatrix> parts[] = {{3.0, bell_state(BellKind::PsiPlus)},
                                                    {1.0, DensityMatrix::maximally_mixed()}};
  CHECK(max_abs_diff(mixture(parts).matrix(), werner(0.75, BellKind::PsiPlus).matrix()) < 1e-15);
  const std::pair<double, DensityMatrix> negative[] = {{-1.0, bell_state(BellKind::PsiPlus)},
                                                       {2.0, DensityMatrix::maximally_mixed()}};
  CHECK_THROWS_AS(mixture(negative), std::invalid_argument);
  const std::pair<double, DensityMatrix> zero[] = {{0.0, bell_state(BellKind::PsiPlus)}};
  CHECK_THROWS_AS(mixture(zero), std::invalid_argument);
}

TEST_CASE("outcome probabilities of psi+") {
  const auto pp = bell_state(BellKind::PsiPlus);
  const auto zz = outcome_probabilities(pp, {Observable::from_pauli(Pauli::Z), Observable::from_pauli(Pauli::Z)});
  CHECK(zz[0] == doctest::Approx(0.0));
  CHECK(zz[1] == doctest::Approx(0.5));
  CHECK(zz[2] == doctest::Approx(0.5));
  CHECK(zz[3] == doctest::Approx(0.0));
  const auto xx = outcome_probabilities(pp, {Observable::from_pauli(Pauli::X), Observable::from_pauli(Pauli::X)});
  CHECK(xx[0] == doctest::Approx(0.5));
  CHECK(xx[3] == doctest::Approx(0.5));
}

TEST_CASE("tomography inverts exact moments") {
  CHECK(trace_distance(tomography_reconstruct(exact_tomography_tallies(bell_state(BellKind::PsiPlus))),
                       bell_state(BellKind::PsiPlus)) < 1e-8);
  CHECK(trace_distance(tomography_reconstruct(exact_tomography_tallies(DensityMatrix::maximally_mixed())),
                       DensityMatrix::maximally_mixed()) < 1e-8);
  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    const auto rho = random_state(rng, 1 + i % 4);
    CHECK(trace_distance(tomography_reconstruct(exact_tomography_tallies(rho)), rho) < 1e-8);
  }
}

TEST_CASE("tomography rejects incomplete tallies") {
  auto t = exact_tomography_tallies(bell_state(BellKind::PsiPlus));
  TallyTable missing;
  for (const auto& [k, v] : t.entries())
    if (k != "XY") missing[k] = v;
  CHECK_THROWS_AS(tomography_reconstruct(missing), std::invalid_argument);
  t["ZZ"] = OutcomeCounts{};
  CHECK_THROWS_AS(tomography_reconstruct(t), std::invalid_argument);
}

TEST_CASE("projection onto physical states") {
  Matrix4 m = Matrix4::Zero();
  m(0, 0) = 0.7;
  m(1, 1) = 0.4;
  m(2, 2) = -0.1;
  const Matrix4 p = project_to_physical(m);
  CHECK_NOTHROW(validate_density(p));
  // Deficit of -0.1 spread over the two survivors.
  CHECK(p(0, 0).real() == doctest::Approx(0.65));
  CHECK(p(1, 1).real() == doctest::Approx(0.35));
  CHECK(std::abs(p(2, 2)) < 1e-15);
  const Matrix4 phys = bell_state(BellKind::PsiPlus).matrix();
  CHECK(max_abs_diff(project_to_physical(phys), phys) < 1e-12);
}

TEST_CASE("observables need a non-zero bloch vector") {
  CHECK_THROWS_AS(Observable::from_bloch(0, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(Observable::from_pauli(Pauli::I), std::invalid_argument);
  const auto o = Observable::xz(1.0, 1.0);
  CHECK(o.bloch()[0] == doctest::Approx(1.0 / kSqrt2));
  CHECK(o.bloch()[2] == doctest::Approx(1.0 / kSqrt2));
}
