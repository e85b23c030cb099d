#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "qrlink/qstate.h"
#include "qrlink/rng.h"
#include "qrlink/tally.h"

namespace qrlink::testing {

// Haar-ish random mixed state: G G^dagger / tr with complex Gaussian G.
inline qstate::DensityMatrix random_state(Rng& rng, int rank = 4) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Matrix<std::complex<double>, 4, Eigen::Dynamic> g(4, rank);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < rank; ++c) g(r, c) = {n(rng), n(rng)};
  qstate::Matrix4 m = g * g.adjoint();
  m /= m.trace().real();
  return qstate::DensityMatrix(m);
}

// Tallies whose frequencies are the Born probabilities to ~1/scale.
inline OutcomeCounts exact_counts(const std::array<double, 4>& p, double scale = 1e13) {
  OutcomeCounts c;
  for (int k = 0; k < 4; ++k) c.n[k] = static_cast<std::uint64_t>(std::llround(p[k] * scale));
  return c;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::filesystem::path golden(const std::string& name) {
  return std::filesystem::path(QRLINK_TEST_DATA_DIR) / "golden" / name;
}

inline double max_abs_diff(const qstate::Matrix4& a, const qstate::Matrix4& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace qrlink::testing
