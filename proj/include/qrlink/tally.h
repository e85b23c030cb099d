#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

namespace qrlink {

// Outcome order: (+1,+1), (+1,-1), (-1,+1), (-1,-1).
enum class Outcome : int { kPlusPlus = 0, kPlusMinus = 1, kMinusPlus = 2, kMinusMinus = 3 };

struct OutcomeCounts {
  std::array<std::uint64_t, 4> n{};

  std::uint64_t total() const { return n[0] + n[1] + n[2] + n[3]; }
  void add(Outcome o, std::uint64_t k = 1) { n[static_cast<int>(o)] += k; }

  // <a*b>, <a>, <b> estimated from the counts. Throw on an empty table.
  double correlator() const;
  double marginal_a() const;
  double marginal_b() const;

  OutcomeCounts& operator+=(const OutcomeCounts& other);
  bool operator==(const OutcomeCounts&) const = default;
};

// Counts keyed by canonical setting name ("XZ", "A0B1", ...).
class TallyTable {
 public:
  OutcomeCounts& operator[](const std::string& key) { return counts_[key]; }
  const OutcomeCounts& at(const std::string& key) const;
  bool contains(const std::string& key) const { return counts_.count(key) != 0; }
  const std::map<std::string, OutcomeCounts>& entries() const { return counts_; }

  // Commutative merge.
  TallyTable& operator+=(const TallyTable& other);
  bool operator==(const TallyTable&) const = default;

 private:
  std::map<std::string, OutcomeCounts> counts_;
};

}  // namespace qrlink
