#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qrlink::cli {

enum ExitCode : int {
  kOk = 0,
  kOther = 1,
  kSchema = 2,
  kPhysical = 3,
  kSweepHashMismatch = 4,
  kNoDeliveredPairs = 5,
};

class HashMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoDeliveredPairs : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> frames;
  std::optional<std::string> out_dir;
  unsigned threads = 1;
  std::vector<std::string> overrides;
  bool wall_clock = false;
  bool quiet = false;
};

int cmd_simulate(const std::string& scenario_path, const GlobalOptions& g);
int cmd_sweep(const std::string& scenario_path, const GlobalOptions& g);
int cmd_belltest(const std::string& scenario_path, const GlobalOptions& g);
int cmd_tomography(const std::string& scenario_path, const GlobalOptions& g);
int cmd_compare(const std::string& scenario_path, const GlobalOptions& g);

// Runs `fn` and maps exceptions to exit codes, printing the message to stderr.
int guarded(const char* command, int (*fn)(const std::string&, const GlobalOptions&), const std::string& path,
            const GlobalOptions& g);

}  // namespace qrlink::cli
