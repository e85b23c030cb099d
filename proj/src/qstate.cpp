#include "qrlink/qstate.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace qrlink::qstate {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;

Matrix4 kron(const Matrix2& a, const Matrix2& b) {
  Matrix4 out;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
    }
  }
  return out;
}

Matrix4 bell_projector(BellKind kind) {
  Matrix4 m = Matrix4::Zero();
  const double s = bell_sign(kind);
  m(1, 1) = 0.5;
  m(2, 2) = 0.5;
  m(1, 2) = 0.5 * s;
  m(2, 1) = 0.5 * s;
  return m;
}

Eigen::SelfAdjointEigenSolver<Matrix4> eigen_hermitian(const Matrix4& m) {
  // Symmetrize first; Eigen reads only the lower triangle.
  const Matrix4 h = 0.5 * (m + m.adjoint());
  return Eigen::SelfAdjointEigenSolver<Matrix4>(h);
}

Matrix4 psd_sqrt(const Matrix4& m) {
  auto es = eigen_hermitian(m);
  Eigen::Vector4d ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
}

void check_observable(const Matrix2& o, const char* which) {
  if ((o - o.adjoint()).cwiseAbs().maxCoeff() > kHermitianTol) {
    throw std::invalid_argument(std::string("observable ") + which + " is not Hermitian");
  }
  if ((o * o - Matrix2::Identity()).cwiseAbs().maxCoeff() > 1e-10) {
    throw std::invalid_argument(std::string("observable ") + which +
                                " does not have a +1/-1 spectrum");
  }
}

double real_trace_checked(const Complex& t) {
  if (std::abs(t.imag()) > 1e-10) {
    throw std::logic_error("expectation value has a non-negligible imaginary part");
  }
  return t.real();
}

}  // namespace

const char* to_string(BellKind k) { return k == BellKind::PsiPlus ? "psi_plus" : "psi_minus"; }

Matrix2 pauli_matrix(Pauli p) {
  Matrix2 m;
  switch (p) {
    case Pauli::I:
      m << 1, 0, 0, 1;
      break;
    case Pauli::X:
      m << 0, 1, 1, 0;
      break;
    case Pauli::Y:
      m << 0, Complex(0, -1), Complex(0, 1), 0;
      break;
    case Pauli::Z:
      m << 1, 0, 0, -1;
      break;
  }
  return m;
}

char pauli_char(Pauli p) {
  switch (p) {
    case Pauli::I:
      return 'I';
    case Pauli::X:
      return 'X';
    case Pauli::Y:
      return 'Y';
    case Pauli::Z:
      return 'Z';
  }
  return '?';
}

std::string PauliLabel::key() const { return {pauli_char(a), pauli_char(b)}; }

std::array<PauliLabel, 9> tomography_labels() {
  std::array<PauliLabel, 9> out{};
  const Pauli axes[3] = {Pauli::X, Pauli::Y, Pauli::Z};
  int k = 0;
  for (Pauli a : axes) {
    for (Pauli b : axes) {
      out[k++] = PauliLabel{a, b};
    }
  }
  return out;
}

Observable Observable::from_bloch(double x, double y, double z) {
  const double norm = std::sqrt(x * x + y * y + z * z);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw std::invalid_argument("observable needs a non-zero Bloch vector");
  }
  return Observable({x / norm, y / norm, z / norm});
}

Observable Observable::from_pauli(Pauli p) {
  switch (p) {
    case Pauli::X:
      return Observable({1, 0, 0});
    case Pauli::Y:
      return Observable({0, 1, 0});
    case Pauli::Z:
      return Observable({0, 0, 1});
    case Pauli::I:
      break;
  }
  throw std::invalid_argument("identity is not a +1/-1 observable");
}

Observable Observable::xz(double z_coeff, double x_coeff) {
  return from_bloch(x_coeff, 0.0, z_coeff);
}

Matrix2 Observable::matrix() const {
  return n_[0] * pauli_matrix(Pauli::X) + n_[1] * pauli_matrix(Pauli::Y) +
         n_[2] * pauli_matrix(Pauli::Z);
}

ChshSettings standard_chsh_settings() {
  const Observable a0 = Observable::xz(1.0 / kSqrt2, 1.0 / kSqrt2);
  const Observable a1 = Observable::xz(1.0 / kSqrt2, -1.0 / kSqrt2);
  const Observable b0 = Observable::xz(-1.0, 0.0);
  const Observable b1 = Observable::xz(0.0, 1.0);
  return {MeasurementSetting{a0, b0}, MeasurementSetting{a0, b1}, MeasurementSetting{a1, b0},
          MeasurementSetting{a1, b1}};
}

void validate_density(const Matrix4& m) {
  if (!m.allFinite()) {
    throw std::invalid_argument("density matrix has non-finite entries");
  }
  if ((m - m.adjoint()).cwiseAbs().maxCoeff() > kHermitianTol) {
    throw std::invalid_argument("density matrix is not Hermitian");
  }
  const Complex tr = m.trace();
  if (std::abs(tr - Complex(1.0, 0.0)) > kTraceTol) {
    throw std::invalid_argument("density matrix trace differs from 1");
  }
  if (eigen_hermitian(m).eigenvalues().minCoeff() < -kPsdTol) {
    throw std::invalid_argument("density matrix has a negative eigenvalue");
  }
}

DensityMatrix::DensityMatrix(const Matrix4& m) {
  validate_density(m);
  m_ = 0.5 * (m + m.adjoint());
}

DensityMatrix DensityMatrix::maximally_mixed() { return DensityMatrix(Matrix4::Identity() * 0.25); }

std::string DensityMatrix::serialize() const {
  std::string out;
  char buf[64];
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g", m_(r, c).real(), m_(r, c).imag());
      out += buf;
      out += c == 3 ? '\n' : ' ';
    }
  }
  return out;
}

DensityMatrix DensityMatrix::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  Matrix4 m;
  std::string token;
  for (int k = 0; k < 16; ++k) {
    if (!(in >> token)) {
      throw std::invalid_argument("density matrix record has fewer than 16 entries");
    }
    const auto comma = token.find(',');
    if (comma == std::string::npos) {
      throw std::invalid_argument("density matrix entry '" + token + "' is not re,im");
    }
    m(k / 4, k % 4) = Complex(std::stod(token.substr(0, comma)), std::stod(token.substr(comma + 1)));
  }
  if (in >> token) {
    throw std::invalid_argument("density matrix record has more than 16 entries");
  }
  return DensityMatrix(m);
}

DensityMatrix bell_state(BellKind kind) { return DensityMatrix(bell_projector(kind)); }

DensityMatrix werner(double p, BellKind kind) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("werner weight must lie in [0, 1]");
  }
  return DensityMatrix(p * bell_projector(kind) + (1.0 - p) * 0.25 * Matrix4::Identity());
}

DensityMatrix mixture(std::span<const std::pair<double, DensityMatrix>> parts) {
  Matrix4 acc = Matrix4::Zero();
  double total = 0.0;
  for (const auto& [w, rho] : parts) {
    if (!(w >= 0.0)) {
      throw std::invalid_argument("mixture weights must be non-negative");
    }
    acc += w * rho.matrix();
    total += w;
  }
  if (!(total > 0.0)) {
    throw std::invalid_argument("mixture needs a positive total weight");
  }
  return DensityMatrix(acc / total);
}

double expectation(const DensityMatrix& rho, const Observable& a, const Observable& b) {
  return real_trace_checked((rho.matrix() * kron(a.matrix(), b.matrix())).trace());
}

double expectation(const DensityMatrix& rho, const Matrix2& a, const Matrix2& b) {
  check_observable(a, "A");
  check_observable(b, "B");
  return real_trace_checked((rho.matrix() * kron(a, b)).trace());
}

double expectation(const DensityMatrix& rho, PauliLabel label) {
  return real_trace_checked(
      (rho.matrix() * kron(pauli_matrix(label.a), pauli_matrix(label.b))).trace());
}

double witness_fidelity(double xx, double yy, double zz, int sign) {
  for (double v : {xx, yy, zz}) {
    if (!(v >= -1.0 && v <= 1.0)) {
      throw std::invalid_argument("correlators must lie in [-1, 1]");
    }
  }
  if (sign != 1 && sign != -1) {
    throw std::invalid_argument("witness sign must be +1 or -1");
  }
  return (1.0 - zz + sign * xx + sign * yy) / 4.0;
}

double chsh_value(const DensityMatrix& rho, const ChshSettings& s) {
  return expectation(rho, s[0].a, s[0].b) + expectation(rho, s[1].a, s[1].b) +
         expectation(rho, s[2].a, s[2].b) - expectation(rho, s[3].a, s[3].b);
}

DensityMatrix apply_phase_flip_A(const DensityMatrix& rho) {
  const Eigen::Vector4cd d(1, 1, -1, -1);
  return DensityMatrix(d.asDiagonal() * rho.matrix() * d.conjugate().asDiagonal());
}

DensityMatrix dephase_relative(const DensityMatrix& rho, double delta_phi) {
  const Eigen::Vector4cd d(1, 1, std::polar(1.0, delta_phi), 1);
  return DensityMatrix(d.asDiagonal() * rho.matrix() * d.conjugate().asDiagonal());
}

double fidelity_to_bell(const DensityMatrix& rho, BellKind kind) {
  return real_trace_checked((rho.matrix() * bell_projector(kind)).trace());
}

double uhlmann_fidelity(const DensityMatrix& rho, const DensityMatrix& sigma) {
  const Matrix4 s = psd_sqrt(rho.matrix());
  const Matrix4 inner = s * sigma.matrix() * s;
  const Eigen::Vector4d ev = eigen_hermitian(inner).eigenvalues().cwiseMax(0.0);
  const double root_sum = ev.cwiseSqrt().sum();
  return std::min(1.0, root_sum * root_sum);
}

double trace_distance(const DensityMatrix& rho, const DensityMatrix& sigma) {
  return 0.5 * eigen_hermitian(rho.matrix() - sigma.matrix()).eigenvalues().cwiseAbs().sum();
}

std::array<double, 4> outcome_probabilities(const DensityMatrix& rho, const MeasurementSetting& s) {
  const Matrix2 id = Matrix2::Identity();
  const Matrix2 a = s.a.matrix();
  const Matrix2 b = s.b.matrix();
  const Matrix2 pa[2] = {0.5 * (id + a), 0.5 * (id - a)};
  const Matrix2 pb[2] = {0.5 * (id + b), 0.5 * (id - b)};
  std::array<double, 4> p{};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      p[2 * i + j] = std::max(0.0, (rho.matrix() * kron(pa[i], pb[j])).trace().real());
    }
  }
  const double total = p[0] + p[1] + p[2] + p[3];
  for (double& v : p) {
    v /= total;
  }
  return p;
}

Matrix4 project_to_physical(const Matrix4& m) {
  auto es = eigen_hermitian(m);
  // Eigen sorts ascending; walk from the smallest eigenvalue upward.
  Eigen::Vector4d mu = es.eigenvalues();
  int remaining = 4;
  double deficit = 0.0;
  int idx = 0;
  while (remaining > 0 && mu[idx] + deficit / remaining < 0.0) {
    deficit += mu[idx];
    mu[idx] = 0.0;
    ++idx;
    --remaining;
  }
  for (int j = idx; j < 4; ++j) {
    mu[j] += deficit / remaining;
  }
  mu /= mu.sum();
  return es.eigenvectors() * mu.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
}

DensityMatrix tomography_reconstruct(const TallyTable& tallies) {
  const Pauli axes[3] = {Pauli::X, Pauli::Y, Pauli::Z};
  double corr[3][3];
  double marg_a_num[3] = {0, 0, 0};
  double marg_a_den[3] = {0, 0, 0};
  double marg_b_num[3] = {0, 0, 0};
  double marg_b_den[3] = {0, 0, 0};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const std::string key = PauliLabel{axes[i], axes[j]}.key();
      if (!tallies.contains(key)) {
        throw std::invalid_argument("tomography tallies are missing setting " + key);
      }
      const OutcomeCounts& c = tallies.at(key);
      const double total = static_cast<double>(c.total());
      if (total < 1.0) {
        throw std::invalid_argument("tomography setting " + key + " has no counts");
      }
      corr[i][j] = c.correlator();
      // Marginals pool every setting sharing the local axis.
      marg_a_num[i] += c.marginal_a() * total;
      marg_a_den[i] += total;
      marg_b_num[j] += c.marginal_b() * total;
      marg_b_den[j] += total;
    }
  }
  Matrix4 rho = kron(pauli_matrix(Pauli::I), pauli_matrix(Pauli::I));
  for (int i = 0; i < 3; ++i) {
    rho += (marg_a_num[i] / marg_a_den[i]) * kron(pauli_matrix(axes[i]), pauli_matrix(Pauli::I));
    rho += (marg_b_num[i] / marg_b_den[i]) * kron(pauli_matrix(Pauli::I), pauli_matrix(axes[i]));
    for (int j = 0; j < 3; ++j) {
      rho += corr[i][j] * kron(pauli_matrix(axes[i]), pauli_matrix(axes[j]));
    }
  }
  rho *= 0.25;
  return DensityMatrix(project_to_physical(rho));
}

}  // namespace qrlink::qstate
