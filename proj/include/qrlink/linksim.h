#pragma once

// Frame-based simulator of the three-node elementary link: multiplexed
// emission at nodes A and B, idler interference and detection at node C,
// herald pairing, state assignment, feed-forward and memory retrieval.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "qrlink/photonics.h"
#include "qrlink/qstate.h"
#include "qrlink/rng.h"

namespace qrlink::linksim {

using photonics::ChannelConfig;
using photonics::DetectorConfig;
using photonics::SourceConfig;
using photonics::TemporalGrid;
using qstate::BellKind;
using qstate::DensityMatrix;

struct MemoryConfig {
  double storage_efficiency = 1.0;  // at storage_time
  double storage_time_us = 100.0;
  double bandwidth_mhz = 20.0;

  void validate() const;
};

// Node-side detection of retrieved photons (fourfold coincidence).
struct VerificationConfig {
  // Analyzer optics and detector after the memory.
  double efficiency = 1.0;
  // Uncorrelated click rate at each node's analyzer detectors.
  double background_rate_hz = 0.0;
  // Transmission of the transparency window when the memories are bypassed.
  double bypass_transmission = 1.0;
  // Per-pair success of passive time-to-polarization conversion.
  double passive_tpc_success = 0.25;
  // Fraction of the coherence deficit recovered by filtering in the memory; 0 disables.
  double retrieval_visibility_boost = 0.0;

  void validate() const;
};

enum class HeraldMode { TPI, SPI };

struct ProtocolOptions {
  HeraldMode mode = HeraldMode::TPI;
  double coincidence_window_ns = 20.0;
  std::optional<double> fixed_delay_filter_ns = 500.0;
  bool memory_bypass = false;
  std::array<double, 2> channel_phase_offsets_rad{0.0, 0.0};
  double laser_phase_offset_rad = 0.0;
  bool feed_forward = true;
  // Fraction of wall time spent emitting; rescales absolute rates only.
  double duty_cycle = 1.0;
  double processing_delay_us = 0.0;

  void validate(const TemporalGrid& grid) const;
};

enum class Node : int { A = 0, B = 1 };

struct LinkConfig {
  SourceConfig source_a;
  SourceConfig source_b;
  ChannelConfig channel_a;  // A - C
  ChannelConfig channel_b;  // B - C
  std::array<DetectorConfig, 2> detectors;
  MemoryConfig memory_a;
  MemoryConfig memory_b;
  VerificationConfig verification;
  TemporalGrid grid;
  ProtocolOptions protocol;
  std::uint64_t seed = 1;

  // Throws ConfigError, including storage shorter than the feed-forward round trip.
  void validate() const;

  const SourceConfig& source(Node n) const { return n == Node::A ? source_a : source_b; }
  const ChannelConfig& channel(Node n) const { return n == Node::A ? channel_a : channel_b; }
  const MemoryConfig& memory(Node n) const { return n == Node::A ? memory_a : memory_b; }

  double mean_pairs(Node n) const;
  // Idler collection times fiber survival (detector efficiency excluded).
  double idler_transmission(Node n) const;
  double one_way_latency_us(Node n) const;
  double round_trip_us(Node n) const;
  double max_round_trip_us() const;
  double max_one_way_latency_us() const;
  double storage_window_ns() const;
  // Pairwise indistinguishability: geometric mean of the two source entries.
  double indistinguishability() const;
  double frame_ns() const { return grid.frame_duration_us * 1000.0; }
  double wall_time_s(std::uint64_t frames) const;
};

enum class Detector : int { D1 = 0, D2 = 1 };

enum Tag : std::uint8_t { kFromA = 1, kFromB = 2, kDark = 4 };

struct DetectionEvent {
  std::uint64_t frame = 0;
  double time_ns = 0.0;      // since frame start
  double abs_time_ns = 0.0;  // since run start
  Detector detector = Detector::D1;
  std::uint8_t tags = 0;
  // Global index of the temporal mode the click belongs to.
  std::int64_t mode = 0;
};

// Photons emitted into one temporal mode.
struct ModeEmission {
  std::int64_t mode = 0;
  std::array<std::uint8_t, 2> pairs{0, 0};   // by node
  std::array<std::uint8_t, 2> stored{0, 0};  // signal photons entering the memory
  std::array<std::uint8_t, 2> idlers{0, 0};  // idlers reaching the beamsplitter
};

struct FrameDetections {
  std::uint64_t frame = 0;
  std::vector<ModeEmission> emissions;  // sorted by mode
  std::vector<DetectionEvent> events;   // sorted by time
};

// Emission and detection for one frame with the frame's own RNG stream.
// `injected` entries (frame-local mode indices) are added to the sampled ones.
FrameDetections simulate_detections(const LinkConfig& cfg, std::uint64_t frame,
                                    std::span<const ModeEmission> injected = {});

enum class HeraldCategory { GenuineCrossSource, SameSource, DarkAssisted, Multipair };
const char* to_string(HeraldCategory c);

struct HeraldRecord {
  double t1_ns = 0.0;
  double t2_ns = 0.0;
  std::array<Detector, 2> detectors{Detector::D1, Detector::D1};
  std::array<std::uint8_t, 2> tags{0, 0};
  std::array<std::int64_t, 2> mode_indices{0, 0};
  BellKind parity = BellKind::PsiPlus;
  HeraldCategory category = HeraldCategory::Multipair;
  bool analyzed = false;  // passes the fixed-delay filter (always true without one)
};

// Parity rule: same detector -> psi+, different detectors -> psi-.
BellKind herald_parity(Detector first, Detector second);

bool passes_delay_filter(double t1_ns, double t2_ns, const ProtocolOptions& opts);

// Greedy left-to-right pairing of consecutive clicks; carries an unpaired click
// across push() calls so the stream can span frames.
class HeraldPairer {
 public:
  HeraldPairer(ProtocolOptions opts, double storage_window_ns);
  // Returns the herald closed by this event, if any.
  std::optional<HeraldRecord> push(const DetectionEvent& e);

 private:
  ProtocolOptions opts_;
  double storage_window_ns_;
  bool has_pending_ = false;
  DetectionEvent pending_;
};

// Batch form over a time-sorted list. Keeps only heralds passing the filter.
std::vector<HeraldRecord> pair_detections(std::span<const DetectionEvent> events,
                                          const ProtocolOptions& opts, double storage_window_ns);

// Emission lookup by global mode; returns nullptr when nothing was emitted.
using EmissionLookup = std::function<const ModeEmission*(std::int64_t mode)>;

HeraldCategory classify_herald(const HeraldRecord& h, const EmissionLookup& emissions);

// Herald-level state: genuine -> v*|psi><psi| + (1-v)*(|01><01| + |10><10|)/2,
// every other category -> I/4.
DensityMatrix conditional_state(HeraldCategory category, BellKind parity, double v_eff);

struct DeliveredPair {
  HeraldRecord herald;
  BellKind delivered_parity = BellKind::PsiPlus;
  // Node-pair state conditioned on a fourfold coincidence.
  DensityMatrix state = DensityMatrix::maximally_mixed();
  double delivered_at_ns = 0.0;
  std::array<int, 2> emitted_pairs{0, 0};       // in the two heralded modes
  std::array<int, 2> stored_excitations{0, 0};  // sampled signal photons in the memory
  std::array<bool, 2> retrieval_success{false, false};
  std::array<bool, 2> verified{false, false};
  bool tpc_success = true;
  // Probability of a fourfold coincidence given the herald record and the
  // emitted pair numbers, averaged over signal collection.
  double fourfold_probability = 0.0;
  // Part of it where both node clicks come from stored photons.
  double signal_probability = 0.0;

  bool realized() const { return tpc_success && verified[0] && verified[1]; }
};

// Fraction of a retrieved wavepacket inside the coincidence window.
double window_capture(const LinkConfig& cfg);
// Probability of at least one background click in the two bin windows of a node.
double background_click_probability(const LinkConfig& cfg);

// Builds the delivered pair for an analyzed herald: conditional state,
// fourfold probabilities and the post-selected state. No feed-forward, no sampling.
DeliveredPair assemble_pair(const HeraldRecord& h, const EmissionLookup& emissions,
                            const LinkConfig& cfg);

// Feed-forward deadline: the herald must reach the farther node before the
// early bin is released. `elapsed_us` is time since the early bin was stored.
bool feedforward_deadline_met(double elapsed_us, const LinkConfig& cfg);

// Applies the pi phase at node A for psi- heralds and stamps the delivery time.
// Returns nullopt when the deadline is missed.
std::optional<DeliveredPair> apply_feedforward(DeliveredPair pair, const LinkConfig& cfg);

// Samples retrieval, analyzer clicks and (in bypass mode) passive conversion.
DeliveredPair retrieve(DeliveredPair pair, const LinkConfig& cfg, Rng& rng);

// Ensemble of delivered states weighted by fourfold probability.
struct DeliveredEnsemble {
  qstate::Matrix4 weighted_sum = qstate::Matrix4::Zero();
  double weight = 0.0;
  std::uint64_t pairs = 0;
  std::uint64_t realized = 0;

  void add(const DeliveredPair& p);
  DeliveredEnsemble& operator+=(const DeliveredEnsemble& other);
  bool empty() const { return !(weight > 0.0); }
  DensityMatrix state() const;  // throws when empty
};

struct RunSummary {
  std::uint64_t frames = 0;
  double wall_time_s = 0.0;
  std::uint64_t clicks = 0;
  std::array<std::uint64_t, 2> clicks_by_detector{0, 0};
  std::uint64_t heralds = 0;
  std::uint64_t analyzed = 0;
  std::array<std::uint64_t, 4> analyzed_by_category{0, 0, 0, 0};
  std::uint64_t dropped_deadline = 0;
  double expected_fourfold = 0.0;
  std::uint64_t realized_fourfold = 0;
  // Indexed by delivered parity: 0 psi+, 1 psi-.
  std::array<DeliveredEnsemble, 2> ensembles;

  double click_rate_hz() const;
  double herald_rate_hz() const;
  double analyzed_rate_hz() const;
  double expected_edr_hz() const;
  double realized_edr_hz() const;
};

struct RunObserver {
  // Frames below this index are reported to the callbacks.
  std::uint64_t log_frames = 0;
  std::function<void(const DetectionEvent&)> on_event;
  std::function<void(const HeraldRecord&)> on_herald;
  std::function<void(const DeliveredPair&)> on_delivered;
};

// Runs frames [first_frame, first_frame + frames) in order. Deterministic in (cfg, range).
RunSummary run_link(const LinkConfig& cfg, std::uint64_t frames, const RunObserver& observer = {},
                    std::uint64_t first_frame = 0);

struct FrameResult {
  std::vector<DetectionEvent> events;
  std::vector<HeraldRecord> heralds;  // every herald, analyzed flag set
  std::vector<DeliveredPair> delivered;
};

// Single-frame pipeline.
FrameResult run_frame(const LinkConfig& cfg, std::uint64_t frame,
                      std::span<const ModeEmission> injected = {});

struct SpiSummary {
  std::uint64_t frames = 0;
  double wall_time_s = 0.0;
  std::uint64_t heralds = 0;  // every click heralds
  double delta_phi_rad = 0.0;
  double herald_rate_hz() const;
};

// Accumulated phase of the number-state herald: laser offset plus each link's offset.
double spi_phase(const ProtocolOptions& opts);
// (|10> +- e^{i dphi}|01>)/sqrt2 with coherence v_eff, in the (A, B) excitation basis.
DensityMatrix spi_herald_state(BellKind parity, double v_eff, double delta_phi);
// Single-click heralding on the same photon stream as run_link.
SpiSummary spi_heralding(const LinkConfig& cfg, std::uint64_t frames);

// Memory-bypass verification (delayed-choice photonic analysis). Forces the
// bypass flag; feed-forward is ignored and both parities are kept.
RunSummary memory_bypass_mode(LinkConfig cfg, std::uint64_t frames, const RunObserver& observer = {});

}  // namespace qrlink::linksim
