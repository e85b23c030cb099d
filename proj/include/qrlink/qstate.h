#pragma once

// Two-qubit density-matrix engine for heralded memory pairs.
//
// Basis order is |00>, |01>, |10>, |11> with qubit order (node A, node B).
// For time-bin qubits |0> is the early bin t1 and |1> the late bin t2.

#include <array>
#include <complex>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include <Eigen/Dense>

#include "qrlink/tally.h"

namespace qrlink::qstate {

using Complex = std::complex<double>;
using Matrix2 = Eigen::Matrix2cd;
using Matrix4 = Eigen::Matrix4cd;

inline constexpr double kHermitianTol = 1e-12;
inline constexpr double kTraceTol = 1e-12;
inline constexpr double kPsdTol = 1e-10;

enum class BellKind { PsiPlus, PsiMinus };

inline int bell_sign(BellKind k) { return k == BellKind::PsiPlus ? +1 : -1; }
const char* to_string(BellKind k);

enum class Pauli { I, X, Y, Z };

Matrix2 pauli_matrix(Pauli p);
char pauli_char(Pauli p);

struct PauliLabel {
  Pauli a;
  Pauli b;
  std::string key() const;  // e.g. "XZ"
};

// The nine {X,Y,Z}^2 tomography settings in canonical order.
std::array<PauliLabel, 9> tomography_labels();

// A single-qubit observable n.sigma with unit Bloch vector n; its spectrum is {+1, -1}.
class Observable {
 public:
  static Observable from_bloch(double x, double y, double z);
  static Observable from_pauli(Pauli p);
  // cos-sin combination in the X-Z plane: z_coeff*Z + x_coeff*X, normalized.
  static Observable xz(double z_coeff, double x_coeff);

  Matrix2 matrix() const;
  const std::array<double, 3>& bloch() const { return n_; }

 private:
  explicit Observable(std::array<double, 3> n) : n_(n) {}
  std::array<double, 3> n_;
};

struct MeasurementSetting {
  Observable a;
  Observable b;
};

// Ordered as A0B0, A0B1, A1B0, A1B1.
using ChshSettings = std::array<MeasurementSetting, 4>;
inline constexpr std::array<const char*, 4> kChshKeys = {"A0B0", "A0B1", "A1B0", "A1B1"};

// A0 = (Z+X)/sqrt2, A1 = (Z-X)/sqrt2, B0 = -Z, B1 = X.
ChshSettings standard_chsh_settings();

class DensityMatrix {
 public:
  // Validates Hermiticity, unit trace and positivity; throws std::invalid_argument.
  explicit DensityMatrix(const Matrix4& m);

  static DensityMatrix maximally_mixed();

  const Matrix4& matrix() const { return m_; }
  Complex operator()(int row, int col) const { return m_(row, col); }

  // Four lines of four "re,im" entries, row-major.
  std::string serialize() const;
  static DensityMatrix parse(std::string_view text);

 private:
  Matrix4 m_;
};

// Throws std::invalid_argument describing the first violated invariant.
void validate_density(const Matrix4& m);

DensityMatrix bell_state(BellKind kind);
DensityMatrix werner(double p, BellKind kind);

// Convex combination; weights must be non-negative with positive sum (renormalized).
DensityMatrix mixture(std::span<const std::pair<double, DensityMatrix>> parts);

double expectation(const DensityMatrix& rho, const Observable& a, const Observable& b);
// Raw-matrix form; rejects non-Hermitian or non-involutory observables.
double expectation(const DensityMatrix& rho, const Matrix2& a, const Matrix2& b);
double expectation(const DensityMatrix& rho, PauliLabel label);

// Projector expectation (1 - ZZ + s XX + s YY)/4 with s = sign.
double witness_fidelity(double xx, double yy, double zz, int sign);

double chsh_value(const DensityMatrix& rho, const ChshSettings& settings);

// Conjugation by diag(1, 1, -1, -1): pi phase on node A's late bin. Maps psi- <-> psi+.
DensityMatrix apply_phase_flip_A(const DensityMatrix& rho);

// Conjugation by diag(1, 1, e^{i dphi}, 1): the |10> amplitude picks up e^{i dphi}
// relative to |01>. Placing the phase on |01> instead differs only by a global
// phase on the single-excitation subspace and a sign of dphi.
DensityMatrix dephase_relative(const DensityMatrix& rho, double delta_phi);

double fidelity_to_bell(const DensityMatrix& rho, BellKind kind);

// Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.
double uhlmann_fidelity(const DensityMatrix& rho, const DensityMatrix& sigma);
double trace_distance(const DensityMatrix& rho, const DensityMatrix& sigma);

// Born-rule joint outcome probabilities in the Outcome order of tally.h.
std::array<double, 4> outcome_probabilities(const DensityMatrix& rho, const MeasurementSetting& s);

// Linear inversion from the nine Pauli settings followed by projection onto the
// nearest unit-trace PSD matrix (eigenvalue clipping with the negative mass
// spread evenly over the surviving eigenvalues).
DensityMatrix tomography_reconstruct(const TallyTable& tallies);

// The projection step alone; input must be Hermitian with unit trace.
Matrix4 project_to_physical(const Matrix4& m);

}  // namespace qrlink::qstate
