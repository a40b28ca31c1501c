#pragma once

// Environment interface seen by the trainer: reset/step over the hybrid
// action, with the reward computed from the resulting observation.

#include <cstdint>
#include <optional>
#include <vector>

#include "eexapp/core_types.hpp"
#include "eexapp/ran_sim.hpp"
#include "eexapp/rng.hpp"

namespace eexapp {

struct Scenario {
  FrameConfig frame;
  std::vector<QosTarget> slices;
  std::map<int, int> assignment;
  TrafficProfile traffic;
  ChurnConfig churn;
  std::uint64_t seed = 1;
  double lambda_q = 0.5;
  double lambda_d = 0.5;

  void validate() const {
    frame.validate();
    if (slices.empty()) throw ConfigError("scenario needs at least one slice");
    for (const auto& s : slices) s.validate();
    if (lambda_q < 0.0 || lambda_d < 0.0) throw ConfigError("lambda_q and lambda_d must be >= 0");
  }

  Simulator make_simulator() const { return Simulator(frame, slices, assignment, traffic, seed, churn); }
};

struct SliceTally {
  int slice_id = 0;
  std::int64_t pairs = 0;
  std::int64_t violations = 0;
  double sum_q_mbps = 0.0;
  double sum_d_ms = 0.0;
};

struct EnvStep {
  StateObservation obs;
  RewardBreakdown reward;
  double sleep_ratio = 0.0;
  double violation_ratio = 0.0;
  std::vector<SliceTally> per_slice;
};

/// Reward, violation ratio and per-slice tallies for one observed step.
inline EnvStep score_step(StateObservation obs, const SleepAction& act, const std::vector<QosTarget>& slices,
                          double lambda_q, double lambda_d, const FrameConfig& frame) {
  EnvStep out;
  out.reward = compute_reward(obs, act, slices, lambda_q, lambda_d, frame);
  out.sleep_ratio = static_cast<double>(act.b) / frame.n_ts();
  out.per_slice.resize(slices.size());
  for (std::size_t i = 0; i < slices.size(); ++i) out.per_slice[i].slice_id = slices[i].slice_id;
  std::int64_t bad = 0;
  for (const auto& ue : obs.ues) {
    const QosTarget& t = find_target(slices, ue.slice_id);
    const bool v = violates_qos(ue, t);
    bad += v;
    for (auto& s : out.per_slice)
      if (s.slice_id == ue.slice_id) {
        ++s.pairs;
        s.violations += v;
        s.sum_q_mbps += ue.throughput_mbps;
        s.sum_d_ms += ue.delay_ms;
      }
  }
  out.violation_ratio = obs.ues.empty() ? 0.0 : static_cast<double>(bad) / static_cast<double>(obs.ues.size());
  out.obs = std::move(obs);
  return out;
}

class Environment {
 public:
  virtual ~Environment() = default;
  /// Starts an episode; nullopt keeps the scenario's own seed.
  virtual StateObservation reset(std::optional<std::uint64_t> seed) = 0;
  virtual EnvStep step(const SleepAction& act, const SliceAllocation& alloc) = 0;
  virtual const Scenario& scenario() const = 0;
};

class LocalEnv : public Environment {
 public:
  explicit LocalEnv(Scenario sc) : sc_(std::move(sc)), sim_(sc_.make_simulator()) { sc_.validate(); }

  StateObservation reset(std::optional<std::uint64_t> seed) override {
    sim_.reset(seed.value_or(sc_.seed));
    return sim_.initial_observation();
  }

  EnvStep step(const SleepAction& act, const SliceAllocation& alloc) override {
    StepOutcome o = sim_.step(act, alloc);
    last_ = o;
    return score_step(std::move(o.observation), act, sc_.slices, sc_.lambda_q, sc_.lambda_d, sc_.frame);
  }

  const Scenario& scenario() const override { return sc_; }
  const StepOutcome& last_outcome() const { return last_; }
  Simulator& simulator() { return sim_; }

 private:
  Scenario sc_;
  Simulator sim_;
  StepOutcome last_;
};

}  // namespace eexapp
