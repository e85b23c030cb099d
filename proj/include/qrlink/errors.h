#pragma once

#include <stdexcept>
#include <string>

namespace qrlink {

// A configuration that parses but violates a physical constraint
// (probability outside [0,1], storage shorter than the feed-forward round trip, ...).
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace qrlink
