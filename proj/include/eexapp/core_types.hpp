#pragma once

// Shared domain vocabulary: frame arithmetic, the hybrid (sleep, slice)
// action, QoS targets, per-UE KPI observations and the decomposed reward.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eexapp/errors.hpp"

namespace eexapp {

/// Frame structure for numerology mu: a 10 ms frame holds 2^mu * 10 slots.
struct FrameConfig {
  int mu = 1;
  int prb_total = 51;
  int frames_per_step = 10;

  friend bool operator==(const FrameConfig&, const FrameConfig&) = default;

  int n_ts() const { return (1 << mu) * 10; }
  double slot_duration_s() const { return 0.010 / n_ts(); }
  double step_duration_s() const { return 0.010 * frames_per_step; }

  void validate() const {
    if (mu < 0 || mu > 4) throw ConfigError("numerology mu must be in 0..4, got " + std::to_string(mu));
    if (prb_total < 1) throw ConfigError("prb_total must be >= 1");
    if (frames_per_step < 1) throw ConfigError("frames_per_step must be >= 1");
  }
};

/// Per-frame sleep pattern: a active slots, b sleep slots, c active slots.
struct SleepAction {
  int a = 0;
  int b = 0;
  int c = 0;

  bool valid_for(int n_ts) const { return a >= 0 && b >= 0 && c >= 0 && a + b + c == n_ts; }
  friend bool operator==(const SleepAction&, const SleepAction&) = default;
};

/// Fraction of the PRB budget handed to each slice.
struct SliceAllocation {
  std::vector<double> beta;

  static constexpr double kSumTolerance = 1e-9;

  bool valid() const {
    if (beta.empty()) return false;
    double sum = 0.0;
    for (double b : beta) {
      if (!(b >= 0.0 && b <= 1.0)) return false;
      sum += b;
    }
    return std::abs(sum - 1.0) <= kSumTolerance;
  }

  static SliceAllocation uniform(std::size_t n) {
    return SliceAllocation{std::vector<double>(n, 1.0 / static_cast<double>(n))};
  }
  friend bool operator==(const SliceAllocation&, const SliceAllocation&) = default;
};

struct QosTarget {
  int slice_id = 0;
  double q_target_mbps = 1.0;
  double d_target_ms = 10.0;

  void validate() const {
    if (!(q_target_mbps > 0.0)) throw ConfigError("slice " + std::to_string(slice_id) + ": q_target_mbps must be > 0");
    if (!(d_target_ms > 0.0)) throw ConfigError("slice " + std::to_string(slice_id) + ": d_target_ms must be > 0");
  }
  friend bool operator==(const QosTarget&, const QosTarget&) = default;
};

/// Per-UE KPM metrics, in feature-vector order.
enum class Kpi : int {
  kPdcpSduUl = 0,
  kPdcpSduDl,
  kRlcDelayDl,
  kThrUl,
  kThrDl,
  kPrbUl,
  kPrbDl,
  kTbsDl,
  kRbDl,
  kPuschSnr,
  kPucchSnr,
  kCqi,
  kMcsUl,
  kMcsDl,
  kPhr,
  kBlerUl,
  kBlerDl,
};

inline constexpr int kNumFeatures = 17;

inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "pdcp_sdu_ul", "pdcp_sdu_dl", "rlc_delay_dl", "thr_ul",    "thr_dl",    "prb_ul",
    "prb_dl",      "tbs_dl",      "rb_dl",        "pusch_snr", "pucch_snr", "cqi",
    "mcs_ul",      "mcs_dl",      "phr",          "bler_ul",   "bler_dl"};

using FeatureVector = std::array<double, kNumFeatures>;

struct UeObservation {
  int ue_id = 0;
  int slice_id = 0;
  FeatureVector features{};
  double throughput_mbps = 0.0;  // q_{t,k}
  double delay_ms = 0.0;         // d_{t,k}
  double offered_mbps = 0.0;     // backlog at step start plus arrivals, as a rate

  double feature(Kpi k) const { return features[static_cast<int>(k)]; }
  friend bool operator==(const UeObservation&, const UeObservation&) = default;
};

struct StateObservation {
  std::int64_t step_index = 0;
  std::vector<UeObservation> ues;

  std::size_t k() const { return ues.size(); }

  void validate() const {
    std::vector<int> ids;
    ids.reserve(ues.size());
    for (const auto& u : ues) ids.push_back(u.ue_id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
      throw ArgumentError("StateObservation: duplicate ue_id");
  }
  friend bool operator==(const StateObservation&, const StateObservation&) = default;
};

struct RewardBreakdown {
  double r_total = 0.0;
  double r_alpha = 0.0;
  double r_beta = 0.0;
  std::map<int, double> per_ue_throughput_penalty;
  std::map<int, double> per_ue_delay_penalty;
  double lambda_q = 0.5;
  double lambda_d = 0.5;
};

/// All (a, b, c) with a + b + c = n_ts, ordered by (b, a). The position in this
/// sequence is the categorical class id used by the sleep policy.
inline std::vector<SleepAction> enumerate_sleep_actions(const FrameConfig& cfg) {
  const int n = cfg.n_ts();
  std::vector<SleepAction> out;
  out.reserve(static_cast<std::size_t>((n + 1) * (n + 2) / 2));
  for (int b = 0; b <= n; ++b)
    for (int a = 0; a <= n - b; ++a) out.push_back({a, b, n - a - b});
  return out;
}

inline const QosTarget& find_target(std::span<const QosTarget> targets, int slice_id) {
  for (const auto& t : targets)
    if (t.slice_id == slice_id) return t;
  throw ConfigError("no QoS target declared for slice " + std::to_string(slice_id));
}

/// Delay clipped at twice the slice target so a few stale packets cannot dominate.
inline double clipped_delay_ms(double delay_ms, const QosTarget& t) {
  return std::min(delay_ms, 2.0 * t.d_target_ms);
}

inline double throughput_penalty(const UeObservation& ue, const QosTarget& t) {
  if (ue.offered_mbps <= 0.0) return 0.0;  // idle UE cannot be under-served
  return std::max(0.0, 1.0 - ue.throughput_mbps / t.q_target_mbps);
}

inline double delay_penalty(const UeObservation& ue, const QosTarget& t) {
  return std::max(0.0, clipped_delay_ms(ue.delay_ms, t) / t.d_target_ms - 1.0);
}

/// True if the UE misses its throughput or (clipped) delay target this step.
inline bool violates_qos(const UeObservation& ue, const QosTarget& t) {
  const bool thr_miss = ue.offered_mbps > 0.0 && ue.throughput_mbps < t.q_target_mbps;
  return thr_miss || clipped_delay_ms(ue.delay_ms, t) > t.d_target_ms;
}

inline RewardBreakdown compute_reward(const StateObservation& obs, const SleepAction& act,
                                      std::span<const QosTarget> targets, double lambda_q,
                                      double lambda_d, const FrameConfig& cfg) {
  if (!act.valid_for(cfg.n_ts())) throw ArgumentError("compute_reward: sleep action violates a+b+c=n_ts");
  if (lambda_q < 0.0 || lambda_d < 0.0) throw ArgumentError("compute_reward: multipliers must be >= 0");

  RewardBreakdown r;
  r.lambda_q = lambda_q;
  r.lambda_d = lambda_d;
  r.r_alpha = static_cast<double>(act.b) / static_cast<double>(cfg.n_ts());

  // Sum in ue_id order so the result does not depend on report order.
  double sum_q = 0.0;
  double sum_d = 0.0;
  for (const auto& ue : obs.ues) {
    const QosTarget& t = find_target(targets, ue.slice_id);
    r.per_ue_throughput_penalty[ue.ue_id] = throughput_penalty(ue, t);
    r.per_ue_delay_penalty[ue.ue_id] = delay_penalty(ue, t);
  }
  for (const auto& [id, p] : r.per_ue_throughput_penalty) sum_q += p;
  for (const auto& [id, p] : r.per_ue_delay_penalty) sum_d += p;

  r.r_beta = 0.0 - lambda_q * sum_q - lambda_d * sum_d;
  r.r_total = r.r_alpha + r.r_beta;
  return r;
}

/// Sample estimate of the relaxed objective: the mean per-step reward.
inline double lagrangian_objective(std::span<const RewardBreakdown> trajectory) {
  if (trajectory.empty()) throw ArgumentError("lagrangian_objective: empty trajectory");
  double sum = 0.0;
  for (const auto& r : trajectory) sum += r.r_total;
  return sum / static_cast<double>(trajectory.size());
}

}  // namespace eexapp
