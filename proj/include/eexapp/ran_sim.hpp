#pragma once

// Slot-level simulator of a single cell with sliced PRB scheduling and an RU
// sleep mask. It plays the role of the unknown throughput/delay functions the
// controller learns against: Poisson packet arrivals, per-slice round-robin
// PRB grants, FIFO queues, a CQI random walk, and KPM feature emission.
//
// Modeling constants (not ground truth, documented here once):
//   * bits per PRB grant = floor(12 subcarriers * 14 symbols * efficiency(cqi))
//   * efficiency(cqi) follows the 4-bit CQI table (QPSK..64QAM), 0 .. 5.5547
//   * CQI moves +-1 with probability 0.1 each, once per frame, clamped to [3, 15]
//   * UL quantities are synthesized as 5% of DL plus seeded noise
//   * SNR_pusch = 2*cqi - 5 + N(0,1) dB, SNR_pucch = 2*cqi - 3 + N(0,1) dB
//   * MCS_dl = clamp(round(1.9*cqi - 1), 0, 28), MCS_ul = max(MCS_dl - 2, 0)
//   * PHR = 2*cqi - 5 + N(0,1) dB
//   * BLER = clamp(0.1*exp(-0.25*(cqi-3)) + 0.005*N(0,1), 0, 1)
// Sleep slots block all service. Buffers are unbounded; nothing is dropped.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "eexapp/core_types.hpp"
#include "eexapp/errors.hpp"
#include "eexapp/rng.hpp"

namespace eexapp {

enum class TrafficLevel { kLight, kMedium, kHeavy };

inline std::string to_string(TrafficLevel l) {
  switch (l) {
    case TrafficLevel::kLight: return "light";
    case TrafficLevel::kMedium: return "medium";
    case TrafficLevel::kHeavy: return "heavy";
  }
  return "?";
}

inline TrafficLevel parse_traffic_level(const std::string& s) {
  if (s == "light") return TrafficLevel::kLight;
  if (s == "medium") return TrafficLevel::kMedium;
  if (s == "heavy") return TrafficLevel::kHeavy;
  throw ConfigError("unknown traffic level '" + s + "' (expected light|medium|heavy)");
}

/// Per-UE offered load: each UE's Poisson mean rate is drawn uniformly from
/// [lo_mbps, hi_mbps] when the simulator is created or reset.
struct TrafficProfile {
  TrafficLevel level = TrafficLevel::kLight;
  double lo_mbps = 0.1;
  double hi_mbps = 1.0;
  int packet_size_bytes = 1500;

  static TrafficProfile of(TrafficLevel level, int packet_size_bytes = 1500) {
    switch (level) {
      case TrafficLevel::kLight: return {level, 0.1, 1.0, packet_size_bytes};
      case TrafficLevel::kMedium: return {level, 1.0, 5.0, packet_size_bytes};
      case TrafficLevel::kHeavy: return {level, 5.0, 10.0, packet_size_bytes};
    }
    return {};
  }
};

/// Optional UE attach/detach process, evaluated once per step per UE.
struct ChurnConfig {
  bool enabled = false;
  double detach_prob = 0.05;
  double attach_prob = 0.2;
};

inline constexpr std::array<double, 16> kCqiEfficiency = {
    0.0,    0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766,
    1.9141, 2.4063, 2.7305, 3.3223, 3.9023, 4.5234, 5.1152, 5.5547};

inline std::int64_t bits_per_prb(int cqi) {
  return static_cast<std::int64_t>(std::floor(12.0 * 14.0 * kCqiEfficiency[static_cast<std::size_t>(cqi)]));
}

/// Largest-remainder split of prb_total by the fractions in beta; ties go to
/// the lower slice index.
inline std::vector<int> split_prbs(const SliceAllocation& alloc, int prb_total) {
  const std::size_t n = alloc.beta.size();
  std::vector<int> out(n, 0);
  std::vector<double> frac(n, 0.0);
  int used = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double share = alloc.beta[i] * prb_total;
    out[i] = static_cast<int>(std::floor(share));
    frac[i] = share - out[i];
    used += out[i];
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return frac[x] > frac[y]; });
  for (std::size_t j = 0; used < prb_total && j < n; ++j, ++used) ++out[order[j]];
  return out;
}

struct Packet {
  double arrival_s = 0.0;
  std::int64_t remaining_bits = 0;
};

struct UeLink {
  int ue_id = 0;
  int slice_id = 0;
  int cqi = 10;
  bool attached = true;
  double mean_rate_mbps = 0.0;
  double next_arrival_s = 0.0;
  std::deque<Packet> queue;
  std::int64_t queue_bits = 0;
  Engine traffic_rng;
  Engine channel_rng;
};

struct UeStepStats {
  int ue_id = 0;
  int slice_id = 0;
  bool attached = true;
  std::int64_t arrived_bits = 0;
  std::int64_t served_bits = 0;
  std::int64_t queue_bits_before = 0;
  std::int64_t queue_bits_after = 0;
  double q_mbps = 0.0;
  double d_ms = 0.0;
};

struct StepOutcome {
  StateObservation observation;
  std::vector<UeStepStats> ues;  // every UE, attached or not
  double sleep_ratio = 0.0;
  std::int64_t served_bits = 0;
  std::int64_t arrived_bits = 0;
  std::int64_t queued_bits = 0;
};

class Simulator {
 public:
  Simulator(FrameConfig cfg, std::vector<QosTarget> slices, std::map<int, int> ue_assignment,
            TrafficProfile traffic, std::uint64_t seed, ChurnConfig churn = {})
      : cfg_(cfg), slices_(std::move(slices)), assignment_(std::move(ue_assignment)), traffic_(traffic), churn_(churn) {
    cfg_.validate();
    if (slices_.empty()) throw ConfigError("simulator needs at least one slice");
    for (std::size_t i = 0; i < slices_.size(); ++i) {
      slices_[i].validate();
      if (slice_index_.count(slices_[i].slice_id)) throw ConfigError("duplicate slice id " + std::to_string(slices_[i].slice_id));
      slice_index_[slices_[i].slice_id] = i;
    }
    for (const auto& [ue, slice] : assignment_)
      if (!slice_index_.count(slice))
        throw ConfigError("UE " + std::to_string(ue) + " mapped to unknown slice " + std::to_string(slice));
    if (traffic_.packet_size_bytes <= 0) throw ConfigError("packet_size_bytes must be > 0");
    if (!(traffic_.lo_mbps >= 0.0 && traffic_.hi_mbps >= traffic_.lo_mbps)) throw ConfigError("invalid traffic rate range");
    reset(seed);
  }

  void reset(std::uint64_t seed) {
    seed_ = seed;
    step_index_ = 0;
    slot_counter_ = 0;
    noise_rng_.seed(stream_seed(seed, 3));
    churn_rng_.seed(stream_seed(seed, 4));
    Engine rate_rng(stream_seed(seed, 1));
    ues_.clear();
    rr_.assign(slices_.size(), 0);
    for (const auto& [ue_id, slice_id] : assignment_) {
      UeLink u;
      u.ue_id = ue_id;
      u.slice_id = slice_id;
      u.mean_rate_mbps = uniform(rate_rng, traffic_.lo_mbps, traffic_.hi_mbps);
      u.traffic_rng.seed(stream_seed(seed, 1000 + static_cast<std::uint64_t>(ue_id)));
      u.channel_rng.seed(stream_seed(seed, 500000 + static_cast<std::uint64_t>(ue_id)));
      u.cqi = 6 + static_cast<int>(uniform_index(u.channel_rng, 10));
      u.next_arrival_s = draw_interarrival(u);
      ues_.push_back(std::move(u));
    }
  }

  const FrameConfig& frame_config() const { return cfg_; }
  const std::vector<QosTarget>& slices() const { return slices_; }
  const std::map<int, int>& assignment() const { return assignment_; }
  const TrafficProfile& traffic() const { return traffic_; }
  std::uint64_t seed() const { return seed_; }
  std::int64_t step_index() const { return step_index_; }
  const std::vector<UeLink>& ues() const { return ues_; }

  /// Observation before any action has been applied (all counters zero).
  StateObservation initial_observation() {
    StateObservation obs;
    obs.step_index = step_index_;
    for (auto& u : ues_) {
      if (!u.attached) continue;
      UeObservation o;
      o.ue_id = u.ue_id;
      o.slice_id = u.slice_id;
      o.features = synthesize_features(u, 0, 0, 0, 0.0, 0.0);
      obs.ues.push_back(o);
    }
    return obs;
  }

  StepOutcome step(const SleepAction& act, const SliceAllocation& alloc) {
    const int n_ts = cfg_.n_ts();
    if (!act.valid_for(n_ts))
      throw ArgumentError("step: sleep action (" + std::to_string(act.a) + "," + std::to_string(act.b) + "," +
                          std::to_string(act.c) + ") violates a+b+c=" + std::to_string(n_ts));
    if (alloc.beta.size() != slices_.size() || !alloc.valid())
      throw ArgumentError("step: slice allocation must hold one fraction per slice, each in [0,1], summing to 1");

    if (churn_.enabled) apply_churn();

    const std::size_t n = ues_.size();
    std::vector<UeStepStats> stats(n);
    std::vector<std::int64_t> prb_granted(n, 0);
    std::vector<std::int64_t> grant_slots(n, 0);
    std::vector<double> sojourn_sum(n, 0.0);
    std::vector<std::int64_t> completed(n, 0);
    for (std::size_t k = 0; k < n; ++k) {
      stats[k].ue_id = ues_[k].ue_id;
      stats[k].slice_id = ues_[k].slice_id;
      stats[k].attached = ues_[k].attached;
      stats[k].queue_bits_before = ues_[k].queue_bits;
    }

    const std::vector<int> slice_prbs = split_prbs(alloc, cfg_.prb_total);
    std::vector<std::vector<std::size_t>> members(slices_.size());
    for (std::size_t k = 0; k < n; ++k) members[slice_index_.at(ues_[k].slice_id)].push_back(k);

    const double slot_s = cfg_.slot_duration_s();
    std::vector<std::int64_t> budget(n, 0);
    for (int f = 0; f < cfg_.frames_per_step; ++f) {
      for (int s = 0; s < n_ts; ++s, ++slot_counter_) {
        const double slot_start = static_cast<double>(slot_counter_) * slot_s;
        const double slot_end = static_cast<double>(slot_counter_ + 1) * slot_s;
        for (std::size_t k = 0; k < n; ++k) stats[k].arrived_bits += admit_until(ues_[k], slot_start);
        const bool asleep = s >= act.a && s < act.a + act.b;
        if (asleep) continue;

        std::fill(budget.begin(), budget.end(), 0);
        for (std::size_t i = 0; i < slices_.size(); ++i)
          grant_round_robin(i, slice_prbs[i], members[i], budget, prb_granted);
        for (std::size_t k = 0; k < n; ++k) {
          if (budget[k] == 0) continue;
          ++grant_slots[k];
          const std::int64_t served = serve(ues_[k], budget[k], slot_end, sojourn_sum[k], completed[k]);
          stats[k].served_bits += served;
        }
      }
      for (auto& u : ues_) walk_cqi(u);
    }
    const double step_end = static_cast<double>(slot_counter_) * slot_s;
    for (std::size_t k = 0; k < n; ++k) stats[k].arrived_bits += admit_until(ues_[k], step_end);

    StepOutcome out;
    out.sleep_ratio = static_cast<double>(act.b) / n_ts;
    out.observation.step_index = step_index_ + 1;
    const double step_s = cfg_.step_duration_s();
    for (std::size_t k = 0; k < n; ++k) {
      UeLink& u = ues_[k];
      UeStepStats& st = stats[k];
      st.queue_bits_after = u.queue_bits;
      st.q_mbps = static_cast<double>(st.served_bits) / step_s / 1e6;
      if (completed[k] > 0)
        st.d_ms = sojourn_sum[k] / static_cast<double>(completed[k]) * 1e3;
      else if (!u.queue.empty())
        st.d_ms = (step_end - u.queue.front().arrival_s) * 1e3;
      else
        st.d_ms = 0.0;
      out.served_bits += st.served_bits;
      out.arrived_bits += st.arrived_bits;
      out.queued_bits += st.queue_bits_after;
      if (!u.attached) continue;

      UeObservation o;
      o.ue_id = u.ue_id;
      o.slice_id = u.slice_id;
      o.throughput_mbps = st.q_mbps;
      o.delay_ms = st.d_ms;
      o.offered_mbps = static_cast<double>(st.queue_bits_before + st.arrived_bits) / step_s / 1e6;
      const double prb_per_slot = static_cast<double>(prb_granted[k]) / (n_ts * cfg_.frames_per_step);
      const double tbs_kbit = grant_slots[k] > 0 ? static_cast<double>(st.served_bits) / grant_slots[k] / 1e3 : 0.0;
      o.features = synthesize_features(u, st.arrived_bits, st.served_bits, prb_granted[k], st.d_ms, prb_per_slot);
      o.features[static_cast<int>(Kpi::kTbsDl)] = tbs_kbit;
      out.observation.ues.push_back(o);
    }
    out.ues = std::move(stats);
    ++step_index_;
    return out;
  }

 private:
  double draw_interarrival(UeLink& u) {
    const double pkt_rate = u.mean_rate_mbps * 1e6 / (traffic_.packet_size_bytes * 8.0);
    if (pkt_rate <= 0.0) return std::numeric_limits<double>::infinity();
    return exponential(u.traffic_rng, pkt_rate);
  }

  std::int64_t admit_until(UeLink& u, double t) {
    std::int64_t bits = 0;
    const std::int64_t pkt_bits = static_cast<std::int64_t>(traffic_.packet_size_bytes) * 8;
    while (u.next_arrival_s < t) {
      if (u.attached) {
        if (!u.queue.empty() && u.queue.back().arrival_s > u.next_arrival_s)
          throw std::logic_error("queue arrival times must be nondecreasing");
        u.queue.push_back({u.next_arrival_s, pkt_bits});
        u.queue_bits += pkt_bits;
        bits += pkt_bits;
      }
      u.next_arrival_s += draw_interarrival(u);
    }
    return bits;
  }

  void grant_round_robin(std::size_t slice, int prbs, const std::vector<std::size_t>& members,
                         std::vector<std::int64_t>& budget, std::vector<std::int64_t>& prb_granted) {
    const std::size_t m = members.size();
    if (m == 0 || prbs <= 0) return;
    std::size_t& ptr = rr_[slice];
    for (int p = 0; p < prbs; ++p) {
      bool granted = false;
      for (std::size_t tries = 0; tries < m; ++tries) {
        const std::size_t k = members[(ptr + tries) % m];
        const UeLink& u = ues_[k];
        if (!u.attached || u.queue_bits - budget[k] <= 0) continue;
        budget[k] += bits_per_prb(u.cqi);
        ++prb_granted[k];
        ptr = (ptr + tries + 1) % m;
        granted = true;
        break;
      }
      if (!granted) return;
    }
  }

  // Serves up to `bits` from the FIFO; packets that finish depart at slot_end.
  static std::int64_t serve(UeLink& u, std::int64_t bits, double slot_end, double& sojourn_sum, std::int64_t& completed) {
    std::int64_t served = 0;
    while (bits > 0 && !u.queue.empty()) {
      Packet& head = u.queue.front();
      const std::int64_t take = std::min(bits, head.remaining_bits);
      head.remaining_bits -= take;
      bits -= take;
      served += take;
      if (head.remaining_bits == 0) {
        sojourn_sum += slot_end - head.arrival_s;
        ++completed;
        u.queue.pop_front();
      }
    }
    u.queue_bits -= served;
    return served;
  }

  static void walk_cqi(UeLink& u) {
    const double r = uniform01(u.channel_rng);
    if (r < 0.1)
      u.cqi = std::max(3, u.cqi - 1);
    else if (r < 0.2)
      u.cqi = std::min(15, u.cqi + 1);
  }

  void apply_churn() {
    for (auto& u : ues_) {
      const double r = uniform01(churn_rng_);
      if (u.attached && r < churn_.detach_prob)
        u.attached = false;
      else if (!u.attached && r < churn_.attach_prob)
        u.attached = true;
    }
  }

  FeatureVector synthesize_features(const UeLink& u, std::int64_t arrived_bits, std::int64_t served_bits,
                                    std::int64_t prbs, double delay_ms, double prb_per_slot) {
    const double step_s = cfg_.step_duration_s();
    const double cqi = u.cqi;
    auto noise = [&] { return standard_normal(noise_rng_); };
    FeatureVector f{};
    const double dl_kbyte = static_cast<double>(arrived_bits) / 8.0 / 1e3;
    f[static_cast<int>(Kpi::kPdcpSduDl)] = dl_kbyte;
    f[static_cast<int>(Kpi::kPdcpSduUl)] = std::max(0.0, 0.05 * dl_kbyte * (1.0 + 0.1 * noise()));
    f[static_cast<int>(Kpi::kRlcDelayDl)] = delay_ms;
    const double thr_dl = static_cast<double>(served_bits) / step_s / 1e6;
    f[static_cast<int>(Kpi::kThrDl)] = thr_dl;
    f[static_cast<int>(Kpi::kThrUl)] = std::max(0.0, 0.05 * thr_dl * (1.0 + 0.1 * noise()));
    f[static_cast<int>(Kpi::kPrbDl)] = prb_per_slot;
    f[static_cast<int>(Kpi::kPrbUl)] = std::max(0.0, 0.05 * prb_per_slot * (1.0 + 0.1 * noise()));
    f[static_cast<int>(Kpi::kTbsDl)] = 0.0;
    f[static_cast<int>(Kpi::kRbDl)] = static_cast<double>(prbs);
    f[static_cast<int>(Kpi::kPuschSnr)] = 2.0 * cqi - 5.0 + noise();
    f[static_cast<int>(Kpi::kPucchSnr)] = 2.0 * cqi - 3.0 + noise();
    f[static_cast<int>(Kpi::kCqi)] = cqi;
    const double mcs_dl = std::clamp(std::round(1.9 * cqi - 1.0), 0.0, 28.0);
    f[static_cast<int>(Kpi::kMcsDl)] = mcs_dl;
    f[static_cast<int>(Kpi::kMcsUl)] = std::max(0.0, mcs_dl - 2.0);
    f[static_cast<int>(Kpi::kPhr)] = 2.0 * cqi - 5.0 + noise();
    const double bler = 0.1 * std::exp(-0.25 * (cqi - 3.0));
    f[static_cast<int>(Kpi::kBlerUl)] = std::clamp(bler + 0.005 * noise(), 0.0, 1.0);
    f[static_cast<int>(Kpi::kBlerDl)] = std::clamp(bler + 0.005 * noise(), 0.0, 1.0);
    return f;
  }

  FrameConfig cfg_;
  std::vector<QosTarget> slices_;
  std::map<int, int> assignment_;
  TrafficProfile traffic_;
  ChurnConfig churn_;
  std::map<int, std::size_t> slice_index_;
  std::uint64_t seed_ = 0;
  std::int64_t step_index_ = 0;
  std::int64_t slot_counter_ = 0;
  std::vector<UeLink> ues_;
  std::vector<std::size_t> rr_;
  Engine noise_rng_;
  Engine churn_rng_;
};

/// `count` UEs (ids 0..count-1) spread evenly over the slices in id order.
inline std::map<int, int> even_assignment(int count, const std::vector<QosTarget>& slices) {
  if (slices.empty()) throw ConfigError("even_assignment: no slices");
  std::map<int, int> out;
  const int per = (count + static_cast<int>(slices.size()) - 1) / static_cast<int>(slices.size());
  for (int ue = 0; ue < count; ++ue) out[ue] = slices[static_cast<std::size_t>(ue / std::max(per, 1))].slice_id;
  return out;
}

/// CSV trace: one row per (step, attached UE).
class TraceWriter {
 public:
  explicit TraceWriter(std::ostream& os) : os_(os) {}

  void header() {
    os_ << "step,ue_id,slice_id,q_mbps,d_ms";
    for (auto n : kFeatureNames) os_ << ',' << n;
    os_ << ",sleep_ratio\n";
  }

  void append(const StepOutcome& out) {
    char buf[64];
    for (const auto& ue : out.observation.ues) {
      os_ << out.observation.step_index << ',' << ue.ue_id << ',' << ue.slice_id;
      auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), ",%.9g", v);
        os_ << buf;
      };
      put(ue.throughput_mbps);
      put(ue.delay_ms);
      for (double v : ue.features) put(v);
      put(out.sleep_ratio);
      os_ << '\n';
    }
  }

 private:
  std::ostream& os_;
};

}  // namespace eexapp
