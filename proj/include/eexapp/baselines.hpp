#pragma once

// Comparison and ablation policies. Learning variants differ only in how the
// agent is wired; static variants never learn.

#include <memory>
#include <string>

#include "eexapp/agent.hpp"
#include "eexapp/trainer.hpp"

namespace eexapp {

enum class Variant { kEexapp, kSasc, kWoTrans, kWoGat, kWoBoth, kStaticAlwaysOn, kStaticFixedSleep, kRandom };

struct VariantSpec {
  Variant variant = Variant::kEexapp;
  int sleep_slots = 0;  // static_fixed_sleep only

  bool learns() const {
    return variant != Variant::kStaticAlwaysOn && variant != Variant::kStaticFixedSleep && variant != Variant::kRandom;
  }

  std::string name() const {
    switch (variant) {
      case Variant::kEexapp: return "eexapp";
      case Variant::kSasc: return "sasc";
      case Variant::kWoTrans: return "wo_trans";
      case Variant::kWoGat: return "wo_gat";
      case Variant::kWoBoth: return "wo_both";
      case Variant::kStaticAlwaysOn: return "static_always_on";
      case Variant::kStaticFixedSleep: return "static_fixed_sleep(" + std::to_string(sleep_slots) + ")";
      case Variant::kRandom: return "random";
    }
    return "?";
  }

  void validate(const FrameConfig& frame) const {
    if (variant == Variant::kStaticFixedSleep && (sleep_slots < 0 || sleep_slots > frame.n_ts()))
      throw ConfigError("static_fixed_sleep b must lie in [0, " + std::to_string(frame.n_ts()) + "]");
  }
};

/// Accepts eexapp, sasc, wo_trans, wo_gat, wo_both, static_always_on,
/// static_fixed_sleep(b) / static_fixed_sleep:b, random.
inline VariantSpec parse_variant(const std::string& s) {
  VariantSpec v;
  if (s == "eexapp") v.variant = Variant::kEexapp;
  else if (s == "sasc") v.variant = Variant::kSasc;
  else if (s == "wo_trans") v.variant = Variant::kWoTrans;
  else if (s == "wo_gat") v.variant = Variant::kWoGat;
  else if (s == "wo_both") v.variant = Variant::kWoBoth;
  else if (s == "static_always_on") v.variant = Variant::kStaticAlwaysOn;
  else if (s == "random") v.variant = Variant::kRandom;
  else if (s.rfind("static_fixed_sleep", 0) == 0) {
    std::string arg = s.substr(18);
    if (arg.size() >= 2 && arg.front() == '(' && arg.back() == ')') arg = arg.substr(1, arg.size() - 2);
    else if (!arg.empty() && arg.front() == ':') arg = arg.substr(1);
    else throw ConfigError("static_fixed_sleep needs a sleep slot count, e.g. static_fixed_sleep(10)");
    std::size_t used = 0;
    try {
      v.sleep_slots = std::stoi(arg, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != arg.size()) throw ConfigError("bad sleep slot count '" + arg + "'");
    v.variant = Variant::kStaticFixedSleep;
  } else {
    throw ConfigError("unknown variant '" + s + "'");
  }
  return v;
}

inline SliceContext slice_context_for(const Scenario& sc, double q_ref_mbps = 10.0, double d_ref_ms = 100.0) {
  return SliceContext{sc.slices, q_ref_mbps, d_ref_ms};
}

/// Architecture flags for a learning variant on a scenario.
inline AgentConfig agent_config_for(const VariantSpec& spec, const Scenario& sc, AgentConfig base = {}) {
  if (!spec.learns()) throw ConfigError("variant " + spec.name() + " does not learn");
  base.variant = spec.name();
  base.n_ts = sc.frame.n_ts();
  base.n_slices = sc.slices.size();
  base.n_classes = enumerate_sleep_actions(sc.frame).size();
  base.encoder.f_in = kNumFeatures + sc.slices.size() + 2;
  base.encoder_kind = EncoderKind::kTransformer;
  base.use_gat = true;
  base.sasc = false;
  switch (spec.variant) {
    case Variant::kSasc: base.sasc = true; base.use_gat = false; break;
    case Variant::kWoTrans: base.encoder_kind = EncoderKind::kMeanPoolMlp; break;
    case Variant::kWoGat: base.use_gat = false; break;
    case Variant::kWoBoth: base.encoder_kind = EncoderKind::kMeanPoolMlp; base.use_gat = false; break;
    default: break;
  }
  return base;
}

inline std::unique_ptr<Agent> build_agent(const VariantSpec& spec, const Scenario& sc, std::uint64_t seed,
                                          const AgentConfig& base = {}, double q_ref_mbps = 10.0,
                                          double d_ref_ms = 100.0) {
  return std::make_unique<Agent>(agent_config_for(spec, sc, base), slice_context_for(sc, q_ref_mbps, d_ref_ms), seed);
}

/// (a, b, c) with the sleep block centred in the frame.
inline SleepAction fixed_sleep_action(int b, const FrameConfig& frame) {
  const int n = frame.n_ts();
  if (b < 0 || b > n) throw ArgumentError("fixed sleep b out of range");
  const int a = (n - b) / 2;
  return {a, b, n - b - a};
}

class StaticController : public Controller {
 public:
  StaticController(int sleep_slots, const FrameConfig& frame, std::size_t n_slices)
      : action_{fixed_sleep_action(sleep_slots, frame), SliceAllocation::uniform(n_slices)} {}

  Action decide(const StateObservation&, Engine&) override { return action_; }

 private:
  Action action_;
};

/// Uniform sleep class and beta = softmax of standard normals.
class RandomController : public Controller {
 public:
  RandomController(const FrameConfig& frame, std::size_t n_slices)
      : actions_(enumerate_sleep_actions(frame)), n_slices_(n_slices) {}

  Action decide(const StateObservation&, Engine& rng) override {
    Action a;
    a.sleep = actions_[uniform_index(rng, actions_.size())];
    std::vector<double> raw(n_slices_);
    for (double& r : raw) r = standard_normal(rng);
    a.alloc = Agent::softmax_allocation(raw);
    return a;
  }

 private:
  std::vector<SleepAction> actions_;
  std::size_t n_slices_;
};

inline std::unique_ptr<Controller> static_controller(const VariantSpec& spec, const Scenario& sc) {
  switch (spec.variant) {
    case Variant::kStaticAlwaysOn: return std::make_unique<StaticController>(0, sc.frame, sc.slices.size());
    case Variant::kStaticFixedSleep:
      spec.validate(sc.frame);
      return std::make_unique<StaticController>(spec.sleep_slots, sc.frame, sc.slices.size());
    case Variant::kRandom: return std::make_unique<RandomController>(sc.frame, sc.slices.size());
    default: throw ConfigError("variant " + spec.name() + " is not a static policy");
  }
}

/// The fixed-sleep grid b in {0, n/4, n/2, 3n/4, n}.
inline std::vector<int> fixed_sleep_grid(const FrameConfig& frame) {
  const int n = frame.n_ts();
  return {0, n / 4, n / 2, 3 * n / 4, n};
}

/// Rolls a controller through the environment for `steps` continuing steps
/// and returns per-step records, the non-learning counterpart of train().
inline std::vector<StepRecord> run_controller(Environment& env, Controller& ctl, std::int64_t steps, std::uint64_t seed,
                                              const std::function<void(const StepRecord&)>& on_step = {}) {
  Engine rng(stream_seed(seed, 11));
  std::vector<StepRecord> out;
  StateObservation obs = env.reset(std::nullopt);
  for (std::int64_t t = 0; t < steps; ++t) {
    const Action a = ctl.decide(obs, rng);
    EnvStep es = env.step(a.sleep, a.alloc);
    StepRecord r{t, es.reward.r_total, es.reward.r_alpha, es.reward.r_beta, es.sleep_ratio, es.violation_ratio, {}};
    if (on_step) on_step(r);
    out.push_back(r);
    obs = std::move(es.obs);
  }
  return out;
}

}  // namespace eexapp
