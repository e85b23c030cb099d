#include "qrlink/tally.h"

#include <stdexcept>

namespace qrlink {

namespace {

double checked_total(const OutcomeCounts& c) {
  const auto t = c.total();
  if (t == 0) {
    throw std::invalid_argument("outcome counts are empty");
  }
  return static_cast<double>(t);
}

}  // namespace

double OutcomeCounts::correlator() const {
  const double t = checked_total(*this);
  return (static_cast<double>(n[0]) + static_cast<double>(n[3]) - static_cast<double>(n[1]) -
          static_cast<double>(n[2])) /
         t;
}

double OutcomeCounts::marginal_a() const {
  const double t = checked_total(*this);
  return (static_cast<double>(n[0]) + static_cast<double>(n[1]) - static_cast<double>(n[2]) -
          static_cast<double>(n[3])) /
         t;
}

double OutcomeCounts::marginal_b() const {
  const double t = checked_total(*this);
  return (static_cast<double>(n[0]) + static_cast<double>(n[2]) - static_cast<double>(n[1]) -
          static_cast<double>(n[3])) /
         t;
}

OutcomeCounts& OutcomeCounts::operator+=(const OutcomeCounts& other) {
  for (int i = 0; i < 4; ++i) {
    n[i] += other.n[i];
  }
  return *this;
}

const OutcomeCounts& TallyTable::at(const std::string& key) const {
  auto it = counts_.find(key);
  if (it == counts_.end()) {
    throw std::invalid_argument("tally table has no setting '" + key + "'");
  }
  return it->second;
}

TallyTable& TallyTable::operator+=(const TallyTable& other) {
  for (const auto& [key, c] : other.counts_) {
    counts_[key] += c;
  }
  return *this;
}

}  // namespace qrlink
