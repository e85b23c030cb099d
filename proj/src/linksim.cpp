#include "qrlink/linksim.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "qrlink/errors.h"

namespace qrlink::linksim {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

std::uint8_t saturate(int n) { return static_cast<std::uint8_t>(std::clamp(n, 0, 255)); }

int parity_index(BellKind k) { return k == BellKind::PsiPlus ? 0 : 1; }

// Occupied modes of one source within a frame, in increasing frame-local order.
void sample_source(const LinkConfig& cfg, Node node, std::vector<ModeEmission>& out, Rng& rng) {
  const auto& src = cfg.source(node);
  const double mu = cfg.mean_pairs(node);
  const double p = photonics::occupied_probability(mu, src.statistics);
  if (!(p > 0.0)) return;
  const int idx = static_cast<int>(node);
  const std::int64_t modes = cfg.grid.mode_count();
  const double eta_sig = src.heralding_efficiency;
  const double eta_idl = cfg.idler_transmission(node);

  auto emit = [&](std::int64_t m) {
    const int n = photonics::sample_occupied_pair_count(mu, rng, src.statistics);
    ModeEmission e;
    e.mode = m;
    e.pairs[idx] = saturate(n);
    e.stored[idx] = saturate(photonics::thin(n, eta_sig, rng));
    e.idlers[idx] = saturate(photonics::thin(n, eta_idl, rng));
    out.push_back(e);
  };

  if (p >= 1.0) {
    for (std::int64_t m = 0; m < modes; ++m) emit(m);
    return;
  }
  std::geometric_distribution<std::int64_t> gap(p);
  for (std::int64_t m = -1;;) {
    m += gap(rng) + 1;
    if (m >= modes) break;
    emit(m);
  }
}

void merge_into(std::vector<ModeEmission>& acc, const std::vector<ModeEmission>& add) {
  std::vector<ModeEmission> merged;
  merged.reserve(acc.size() + add.size());
  std::size_t i = 0, j = 0;
  while (i < acc.size() || j < add.size()) {
    if (j == add.size() || (i < acc.size() && acc[i].mode < add[j].mode)) {
      merged.push_back(acc[i++]);
    } else if (i == acc.size() || add[j].mode < acc[i].mode) {
      merged.push_back(add[j++]);
    } else {
      ModeEmission e = acc[i++];
      const ModeEmission& b = add[j++];
      for (int k = 0; k < 2; ++k) {
        e.pairs[k] = saturate(e.pairs[k] + b.pairs[k]);
        e.stored[k] = saturate(e.stored[k] + b.stored[k]);
        e.idlers[k] = saturate(e.idlers[k] + b.idlers[k]);
      }
      merged.push_back(e);
    }
  }
  acc.swap(merged);
}

double laplace(double scale, Rng& rng) {
  std::exponential_distribution<double> ex(1.0 / scale);
  std::bernoulli_distribution sign(0.5);
  const double x = ex(rng);
  return sign(rng) ? x : -x;
}

const ModeEmission* find_mode(const std::vector<ModeEmission>& v, std::int64_t mode) {
  auto it = std::lower_bound(v.begin(), v.end(), mode,
                             [](const ModeEmission& e, std::int64_t m) { return e.mode < m; });
  if (it == v.end() || it->mode != mode) return nullptr;
  return &*it;
}

bool feedforward_active(const LinkConfig& cfg) {
  return cfg.protocol.feed_forward && !cfg.protocol.memory_bypass;
}

}  // namespace

// ---------------------------------------------------------------- configs

void MemoryConfig::validate() const {
  require(is_probability(storage_efficiency), "memory storage_efficiency outside [0, 1]");
  require(storage_time_us > 0.0 && std::isfinite(storage_time_us), "memory storage_time_us must be positive");
  require(bandwidth_mhz > 0.0 && std::isfinite(bandwidth_mhz), "memory bandwidth_mhz must be positive");
}

void VerificationConfig::validate() const {
  require(is_probability(efficiency), "verification efficiency outside [0, 1]");
  require(background_rate_hz >= 0.0 && std::isfinite(background_rate_hz),
          "verification background_rate_hz must be non-negative");
  require(is_probability(bypass_transmission), "verification bypass_transmission outside [0, 1]");
  require(is_probability(passive_tpc_success), "verification passive_tpc_success outside [0, 1]");
  require(is_probability(retrieval_visibility_boost), "verification retrieval_visibility_boost outside [0, 1]");
}

void ProtocolOptions::validate(const TemporalGrid& grid) const {
  require(coincidence_window_ns > 0.0 && std::isfinite(coincidence_window_ns),
          "coincidence_window_ns must be positive");
  if (fixed_delay_filter_ns) {
    require(std::isfinite(*fixed_delay_filter_ns) && *fixed_delay_filter_ns >= grid.mode_duration_ns,
            "fixed_delay_filter_ns must be at least one mode duration");
  }
  require(duty_cycle > 0.0 && duty_cycle <= 1.0, "duty_cycle outside (0, 1]");
  require(processing_delay_us >= 0.0 && std::isfinite(processing_delay_us),
          "processing_delay_us must be non-negative");
  for (double phi : channel_phase_offsets_rad) require(std::isfinite(phi), "channel phase offset must be finite");
  require(std::isfinite(laser_phase_offset_rad), "laser phase offset must be finite");
}

void LinkConfig::validate() const {
  auto wrap = [](const char* where, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string(where) + ": " + e.what());
    }
  };
  wrap("source_a", [&] { source_a.validate(); });
  wrap("source_b", [&] { source_b.validate(); });
  wrap("channel_a", [&] { channel_a.validate(); });
  wrap("channel_b", [&] { channel_b.validate(); });
  wrap("detectors[0]", [&] { detectors[0].validate(); });
  wrap("detectors[1]", [&] { detectors[1].validate(); });
  wrap("grid", [&] { grid.validate(); });
  memory_a.validate();
  memory_b.validate();
  verification.validate();
  protocol.validate(grid);
  if (feedforward_active(*this) && protocol.mode == HeraldMode::TPI) {
    const double need = max_round_trip_us() + protocol.processing_delay_us;
    const double have = std::min(memory_a.storage_time_us, memory_b.storage_time_us);
    if (have < need) {
      std::ostringstream os;
      os << "storage time " << have << " us is shorter than the feed-forward round trip " << need << " us";
      throw ConfigError(os.str());
    }
  }
}

double LinkConfig::mean_pairs(Node n) const { return photonics::mean_pairs_per_mode(source(n), grid); }

double LinkConfig::idler_transmission(Node n) const {
  return source(n).heralding_efficiency * photonics::survival_probability(channel(n));
}

double LinkConfig::one_way_latency_us(Node n) const { return photonics::propagation_delay_us(channel(n)); }

double LinkConfig::round_trip_us(Node n) const { return 2.0 * one_way_latency_us(n); }

double LinkConfig::max_round_trip_us() const { return std::max(round_trip_us(Node::A), round_trip_us(Node::B)); }

double LinkConfig::max_one_way_latency_us() const {
  return std::max(one_way_latency_us(Node::A), one_way_latency_us(Node::B));
}

double LinkConfig::storage_window_ns() const {
  return std::min(memory_a.storage_time_us, memory_b.storage_time_us) * 1000.0;
}

double LinkConfig::indistinguishability() const {
  return std::sqrt(source_a.indistinguishability * source_b.indistinguishability);
}

double LinkConfig::wall_time_s(std::uint64_t frames) const {
  return static_cast<double>(frames) * grid.frame_duration_us * 1e-6 / protocol.duty_cycle;
}

// ---------------------------------------------------------------- detection

FrameDetections simulate_detections(const LinkConfig& cfg, std::uint64_t frame,
                                    std::span<const ModeEmission> injected) {
  Rng rng = make_rng(cfg.seed, Stream::kFrame, frame);
  const std::int64_t modes = cfg.grid.mode_count();
  const double mode_ns = cfg.grid.mode_duration_ns;
  const double frame_ns = cfg.frame_ns();
  const double frame_start = static_cast<double>(frame) * frame_ns;
  const std::int64_t base = static_cast<std::int64_t>(frame) * modes;

  FrameDetections out;
  out.frame = frame;
  std::vector<ModeEmission> a, b;
  sample_source(cfg, Node::A, a, rng);
  sample_source(cfg, Node::B, b, rng);
  merge_into(a, b);
  if (!injected.empty()) {
    std::vector<ModeEmission> inj(injected.begin(), injected.end());
    for (const auto& e : inj) {
      if (e.mode < 0 || e.mode >= modes) throw std::invalid_argument("injected mode outside the frame");
    }
    std::sort(inj.begin(), inj.end(), [](const auto& x, const auto& y) { return x.mode < y.mode; });
    std::vector<ModeEmission> tmp;
    for (const auto& e : inj) {
      if (!tmp.empty() && tmp.back().mode == e.mode) {
        merge_into(tmp, {e});
      } else {
        tmp.push_back(e);
      }
    }
    merge_into(a, tmp);
  }

  const double v = cfg.indistinguishability();
  const double tau = cfg.grid.wavepacket_decay_ns();
  for (auto& e : a) {
    const int ia = e.idlers[0];
    const int ib = e.idlers[1];
    if (ia + ib > 0) {
      const auto bsm = photonics::bsm_interfere(ia, ib, v, rng);
      const std::array<int, 2> at_port{bsm.d1, bsm.d2};
      const std::uint8_t tags = static_cast<std::uint8_t>((ia > 0 ? kFromA : 0) | (ib > 0 ? kFromB : 0));
      for (int d = 0; d < 2; ++d) {
        if (at_port[d] == 0) continue;
        if (photonics::thin(at_port[d], cfg.detectors[d].efficiency, rng) == 0) continue;
        DetectionEvent ev;
        ev.frame = frame;
        ev.time_ns = (static_cast<double>(e.mode) + 0.5) * mode_ns + laplace(tau, rng);
        ev.detector = static_cast<Detector>(d);
        ev.tags = tags;
        ev.mode = base + e.mode;
        out.events.push_back(ev);
      }
    }
    e.mode += base;
  }
  out.emissions = std::move(a);

  std::uniform_real_distribution<double> uni(0.0, frame_ns);
  for (int d = 0; d < 2; ++d) {
    const int k = photonics::sample_dark_counts(cfg.detectors[d], frame_ns, rng);
    for (int i = 0; i < k; ++i) {
      DetectionEvent ev;
      ev.frame = frame;
      ev.time_ns = uni(rng);
      ev.detector = static_cast<Detector>(d);
      ev.tags = kDark;
      ev.mode = base + std::min<std::int64_t>(static_cast<std::int64_t>(ev.time_ns / mode_ns), modes - 1);
      out.events.push_back(ev);
    }
  }
  for (auto& ev : out.events) ev.abs_time_ns = frame_start + ev.time_ns;
  std::stable_sort(out.events.begin(), out.events.end(),
                   [](const DetectionEvent& x, const DetectionEvent& y) { return x.abs_time_ns < y.abs_time_ns; });
  return out;
}

// ---------------------------------------------------------------- pairing

const char* to_string(HeraldCategory c) {
  switch (c) {
    case HeraldCategory::GenuineCrossSource: return "genuine_cross_source";
    case HeraldCategory::SameSource: return "same_source";
    case HeraldCategory::DarkAssisted: return "dark_assisted";
    case HeraldCategory::Multipair: return "multipair";
  }
  return "?";
}

BellKind herald_parity(Detector first, Detector second) {
  return first == second ? BellKind::PsiPlus : BellKind::PsiMinus;
}

bool passes_delay_filter(double t1_ns, double t2_ns, const ProtocolOptions& opts) {
  if (!opts.fixed_delay_filter_ns) return true;
  return std::abs((t2_ns - t1_ns) - *opts.fixed_delay_filter_ns) <= opts.coincidence_window_ns / 2.0;
}

HeraldPairer::HeraldPairer(ProtocolOptions opts, double storage_window_ns)
    : opts_(std::move(opts)), storage_window_ns_(storage_window_ns) {}

std::optional<HeraldRecord> HeraldPairer::push(const DetectionEvent& e) {
  if (has_pending_ && e.abs_time_ns - pending_.abs_time_ns <= storage_window_ns_) {
    const DetectionEvent& p = pending_;
    HeraldRecord h;
    h.t1_ns = p.abs_time_ns;
    h.t2_ns = e.abs_time_ns;
    h.detectors = {p.detector, e.detector};
    h.tags = {p.tags, e.tags};
    h.mode_indices = {p.mode, e.mode};
    h.parity = herald_parity(p.detector, e.detector);
    h.analyzed = passes_delay_filter(h.t1_ns, h.t2_ns, opts_);
    has_pending_ = false;
    return h;
  }
  pending_ = e;
  has_pending_ = true;
  return std::nullopt;
}

std::vector<HeraldRecord> pair_detections(std::span<const DetectionEvent> events, const ProtocolOptions& opts,
                                          double storage_window_ns) {
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].abs_time_ns < events[i - 1].abs_time_ns) throw std::invalid_argument("events not time-sorted");
  }
  HeraldPairer pairer(opts, storage_window_ns);
  std::vector<HeraldRecord> out;
  for (const auto& e : events) {
    if (auto h = pairer.push(e); h && h->analyzed) out.push_back(*h);
  }
  return out;
}

HeraldCategory classify_herald(const HeraldRecord& h, const EmissionLookup& emissions) {
  const std::uint8_t t1 = h.tags[0];
  const std::uint8_t t2 = h.tags[1];
  if ((t1 | t2) & kDark) return HeraldCategory::DarkAssisted;
  if (t1 == kFromA && t2 == kFromA) return HeraldCategory::SameSource;
  if (t1 == kFromB && t2 == kFromB) return HeraldCategory::SameSource;
  std::int64_t ma = 0, mb = 0;
  if (t1 == kFromA && t2 == kFromB) {
    ma = h.mode_indices[0];
    mb = h.mode_indices[1];
  } else if (t1 == kFromB && t2 == kFromA) {
    ma = h.mode_indices[1];
    mb = h.mode_indices[0];
  } else {
    return HeraldCategory::Multipair;
  }
  if (ma == mb) return HeraldCategory::Multipair;
  auto pairs = [&](std::int64_t mode, int node) -> int {
    const ModeEmission* e = emissions ? emissions(mode) : nullptr;
    return e ? e->pairs[node] : 0;
  };
  if (pairs(ma, 0) == 1 && pairs(mb, 0) == 0 && pairs(mb, 1) == 1 && pairs(ma, 1) == 0) {
    return HeraldCategory::GenuineCrossSource;
  }
  return HeraldCategory::Multipair;
}

DensityMatrix conditional_state(HeraldCategory category, BellKind parity, double v_eff) {
  if (!is_probability(v_eff)) throw std::invalid_argument("v_eff outside [0, 1]");
  if (category != HeraldCategory::GenuineCrossSource) return DensityMatrix::maximally_mixed();
  qstate::Matrix4 m = v_eff * qstate::bell_state(parity).matrix();
  m(1, 1) += (1.0 - v_eff) / 2.0;
  m(2, 2) += (1.0 - v_eff) / 2.0;
  return DensityMatrix(m);
}

// ---------------------------------------------------------------- delivery

double window_capture(const LinkConfig& cfg) {
  return 1.0 - std::exp(-cfg.protocol.coincidence_window_ns / (2.0 * cfg.grid.wavepacket_decay_ns()));
}

double background_click_probability(const LinkConfig& cfg) {
  return 1.0 - std::exp(-cfg.verification.background_rate_hz * 2.0 * cfg.protocol.coincidence_window_ns * 1e-9);
}

DeliveredPair assemble_pair(const HeraldRecord& h, const EmissionLookup& emissions, const LinkConfig& cfg) {
  const bool bypass = cfg.protocol.memory_bypass;
  DeliveredPair p;
  p.herald = h;
  p.delivered_parity = h.parity;

  double v_eff = cfg.indistinguishability();
  if (cfg.protocol.fixed_delay_filter_ns) {
    const auto expected =
        static_cast<std::int64_t>(std::llround(*cfg.protocol.fixed_delay_filter_ns / cfg.grid.mode_duration_ns));
    // Bins from other mode pairs carry no phase reference to the analyzer.
    if (h.mode_indices[1] - h.mode_indices[0] != expected) v_eff = 0.0;
  }
  if (!bypass) v_eff += cfg.verification.retrieval_visibility_boost * (1.0 - v_eff);
  const DensityMatrix herald_state = conditional_state(h.category, h.parity, v_eff);

  const ModeEmission* e1 = emissions ? emissions(h.mode_indices[0]) : nullptr;
  const ModeEmission* e2 =
      (emissions && h.mode_indices[1] != h.mode_indices[0]) ? emissions(h.mode_indices[1]) : nullptr;
  for (int x = 0; x < 2; ++x) {
    p.emitted_pairs[x] = (e1 ? e1->pairs[x] : 0) + (e2 ? e2->pairs[x] : 0);
    p.stored_excitations[x] = (e1 ? e1->stored[x] : 0) + (e2 ? e2->stored[x] : 0);
  }

  const double cap = window_capture(cfg);
  const double qn = background_click_probability(cfg);
  std::array<double, 2> click{}, signal{};
  for (int x = 0; x < 2; ++x) {
    const double eta = bypass ? cfg.verification.bypass_transmission : cfg.memory(static_cast<Node>(x)).storage_efficiency;
    const double qs = cfg.source(static_cast<Node>(x)).heralding_efficiency * eta * cfg.verification.efficiency * cap;
    const double miss = std::pow(1.0 - qs, p.emitted_pairs[x]);
    click[x] = 1.0 - miss * (1.0 - qn);
    signal[x] = 1.0 - miss;
  }
  const double tpc = bypass ? cfg.verification.passive_tpc_success : 1.0;
  p.fourfold_probability = tpc * click[0] * click[1];
  p.signal_probability = tpc * signal[0] * signal[1];
  if (p.fourfold_probability > 0.0) {
    const double w_good = p.signal_probability / p.fourfold_probability;
    const qstate::Matrix4 m =
        w_good * herald_state.matrix() + (1.0 - w_good) * DensityMatrix::maximally_mixed().matrix();
    p.state = DensityMatrix(m);
  } else {
    p.state = herald_state;
  }
  p.delivered_at_ns = h.t2_ns + cfg.max_one_way_latency_us() * 1000.0;
  return p;
}

bool feedforward_deadline_met(double elapsed_us, const LinkConfig& cfg) {
  const double storage = std::min(cfg.memory_a.storage_time_us, cfg.memory_b.storage_time_us);
  return elapsed_us + cfg.max_round_trip_us() + cfg.protocol.processing_delay_us <= storage;
}

std::optional<DeliveredPair> apply_feedforward(DeliveredPair pair, const LinkConfig& cfg) {
  const double elapsed_us = (pair.herald.t2_ns - pair.herald.t1_ns) / 1000.0;
  if (!feedforward_deadline_met(elapsed_us, cfg)) return std::nullopt;
  if (pair.herald.parity == BellKind::PsiMinus) pair.state = qstate::apply_phase_flip_A(pair.state);
  pair.delivered_parity = BellKind::PsiPlus;
  pair.delivered_at_ns =
      pair.herald.t2_ns + (cfg.max_one_way_latency_us() + cfg.protocol.processing_delay_us) * 1000.0;
  return pair;
}

DeliveredPair retrieve(DeliveredPair pair, const LinkConfig& cfg, Rng& rng) {
  const bool bypass = cfg.protocol.memory_bypass;
  const double cap = window_capture(cfg);
  std::bernoulli_distribution background(background_click_probability(cfg));
  std::bernoulli_distribution detect(cfg.verification.efficiency * cap);
  for (int x = 0; x < 2; ++x) {
    const double eta = bypass ? cfg.verification.bypass_transmission : cfg.memory(static_cast<Node>(x)).storage_efficiency;
    std::bernoulli_distribution out(eta);
    bool any_out = false, any_click = false;
    for (int i = 0; i < pair.stored_excitations[x]; ++i) {
      if (!out(rng)) continue;
      any_out = true;
      if (detect(rng)) any_click = true;
    }
    pair.retrieval_success[x] = any_out;
    pair.verified[x] = any_click || background(rng);
  }
  pair.tpc_success = bypass ? std::bernoulli_distribution(cfg.verification.passive_tpc_success)(rng) : true;
  return pair;
}

void DeliveredEnsemble::add(const DeliveredPair& p) {
  weighted_sum += p.fourfold_probability * p.state.matrix();
  weight += p.fourfold_probability;
  ++pairs;
  if (p.realized()) ++realized;
}

DeliveredEnsemble& DeliveredEnsemble::operator+=(const DeliveredEnsemble& other) {
  weighted_sum += other.weighted_sum;
  weight += other.weight;
  pairs += other.pairs;
  realized += other.realized;
  return *this;
}

DensityMatrix DeliveredEnsemble::state() const {
  if (empty()) throw std::runtime_error("no delivered pairs with non-zero fourfold probability");
  return DensityMatrix(weighted_sum / weight);
}

// ---------------------------------------------------------------- runs

namespace {

double rate(double count, double wall) { return wall > 0.0 ? count / wall : 0.0; }

}  // namespace

double RunSummary::click_rate_hz() const { return rate(static_cast<double>(clicks), wall_time_s); }
double RunSummary::herald_rate_hz() const { return rate(static_cast<double>(heralds), wall_time_s); }
double RunSummary::analyzed_rate_hz() const { return rate(static_cast<double>(analyzed), wall_time_s); }
double RunSummary::expected_edr_hz() const { return rate(expected_fourfold, wall_time_s); }
double RunSummary::realized_edr_hz() const { return rate(static_cast<double>(realized_fourfold), wall_time_s); }

namespace {

// Holds emissions of the frames a pending click can still reach.
class EmissionHistory {
 public:
  explicit EmissionHistory(std::size_t depth) : depth_(std::max<std::size_t>(depth, 2)) {}

  void push(std::vector<ModeEmission> frame) {
    frames_.push_back(std::move(frame));
    while (frames_.size() > depth_) frames_.pop_front();
  }

  const ModeEmission* find(std::int64_t mode) const {
    for (auto it = frames_.rbegin(); it != frames_.rend(); ++it) {
      if (it->empty() || mode < it->front().mode) continue;
      return find_mode(*it, mode);
    }
    return nullptr;
  }

 private:
  std::size_t depth_;
  std::deque<std::vector<ModeEmission>> frames_;
};

struct Pipeline {
  const LinkConfig& cfg;
  const RunObserver& obs;
  RunSummary& sum;
  HeraldPairer pairer;
  EmissionHistory history;
  EmissionLookup lookup;
  std::vector<HeraldRecord>* all_heralds = nullptr;
  std::vector<DeliveredPair>* delivered = nullptr;

  Pipeline(const LinkConfig& c, const RunObserver& o, RunSummary& s)
      : cfg(c),
        obs(o),
        sum(s),
        pairer(c.protocol, c.storage_window_ns()),
        history(static_cast<std::size_t>(std::ceil(c.storage_window_ns() / c.frame_ns())) + 1) {
    lookup = [this](std::int64_t m) { return history.find(m); };
  }

  void frame(FrameDetections det) {
    const bool log = det.frame < obs.log_frames;
    history.push(std::move(det.emissions));
    Rng rng = make_rng(cfg.seed, Stream::kRetrieval, det.frame);
    for (const auto& e : det.events) {
      ++sum.clicks;
      ++sum.clicks_by_detector[static_cast<int>(e.detector)];
      if (log && obs.on_event) obs.on_event(e);
      auto h = pairer.push(e);
      if (!h) continue;
      ++sum.heralds;
      h->category = classify_herald(*h, lookup);
      if (log && obs.on_herald) obs.on_herald(*h);
      if (all_heralds) all_heralds->push_back(*h);
      if (!h->analyzed) continue;
      ++sum.analyzed;
      ++sum.analyzed_by_category[static_cast<int>(h->category)];
      DeliveredPair p = assemble_pair(*h, lookup, cfg);
      if (feedforward_active(cfg)) {
        auto ff = apply_feedforward(std::move(p), cfg);
        if (!ff) {
          ++sum.dropped_deadline;
          continue;
        }
        p = std::move(*ff);
      }
      p = retrieve(std::move(p), cfg, rng);
      sum.expected_fourfold += p.fourfold_probability;
      if (p.realized()) ++sum.realized_fourfold;
      sum.ensembles[parity_index(p.delivered_parity)].add(p);
      if (log && obs.on_delivered) obs.on_delivered(p);
      if (delivered) delivered->push_back(p);
    }
  }
};

}  // namespace

RunSummary run_link(const LinkConfig& cfg, std::uint64_t frames, const RunObserver& observer,
                    std::uint64_t first_frame) {
  cfg.validate();
  RunSummary sum;
  sum.frames = frames;
  sum.wall_time_s = cfg.wall_time_s(frames);
  Pipeline pipe(cfg, observer, sum);
  for (std::uint64_t f = first_frame; f < first_frame + frames; ++f) pipe.frame(simulate_detections(cfg, f));
  return sum;
}

FrameResult run_frame(const LinkConfig& cfg, std::uint64_t frame, std::span<const ModeEmission> injected) {
  cfg.validate();
  RunSummary sum;
  RunObserver obs;
  FrameResult out;
  Pipeline pipe(cfg, obs, sum);
  pipe.all_heralds = &out.heralds;
  pipe.delivered = &out.delivered;
  FrameDetections det = simulate_detections(cfg, frame, injected);
  out.events = det.events;
  pipe.frame(std::move(det));
  return out;
}

double SpiSummary::herald_rate_hz() const { return rate(static_cast<double>(heralds), wall_time_s); }

double spi_phase(const ProtocolOptions& opts) {
  return opts.laser_phase_offset_rad + opts.channel_phase_offsets_rad[0] + opts.channel_phase_offsets_rad[1];
}

DensityMatrix spi_herald_state(BellKind parity, double v_eff, double delta_phi) {
  return qstate::dephase_relative(conditional_state(HeraldCategory::GenuineCrossSource, parity, v_eff), delta_phi);
}

SpiSummary spi_heralding(const LinkConfig& cfg, std::uint64_t frames) {
  cfg.grid.validate();
  SpiSummary s;
  s.frames = frames;
  s.wall_time_s = cfg.wall_time_s(frames);
  s.delta_phi_rad = spi_phase(cfg.protocol);
  for (std::uint64_t f = 0; f < frames; ++f) s.heralds += simulate_detections(cfg, f).events.size();
  return s;
}

RunSummary memory_bypass_mode(LinkConfig cfg, std::uint64_t frames, const RunObserver& observer) {
  cfg.protocol.memory_bypass = true;
  return run_link(cfg, frames, observer);
}

}  // namespace qrlink::linksim
