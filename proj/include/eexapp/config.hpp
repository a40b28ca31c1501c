#pragma once

// Experiment configuration: a flat "key = value" text file with dotted keys.
// '#' starts a comment. Unknown keys and malformed values are rejected with
// the file and line. See docs/configs/ for complete files.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "eexapp/baselines.hpp"
#include "eexapp/environment.hpp"
#include "eexapp/trainer.hpp"

namespace eexapp {

struct SliceSpec {
  std::optional<double> q_mbps;
  std::optional<double> d_ms;
  std::optional<int> ues;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  std::string variant = "eexapp";

  FrameConfig frame;
  TrafficLevel traffic = TrafficLevel::kLight;
  int packet_bytes = 1500;
  int ues = 8;
  int slice_count = 2;
  std::vector<SliceSpec> slice_overrides;
  ChurnConfig churn;
  double lambda_q = 0.5;
  double lambda_d = 0.5;

  TrainConfig train;
  std::int64_t checkpoint_every = 0;  // updates; 0 = only the final checkpoint

  AgentConfig agent;
  double q_ref_mbps = 10.0;
  double d_ref_ms = 100.0;

  int eval_episodes = 5;
  std::int64_t eval_steps = 1000;

  int e2_policy_timeout_ms = 10000;
  int e2_grace_steps = 10;

  /// Default per-slice QoS: Q is half the lower edge of the traffic range
  /// (so an idle-ish UE can still meet it), D alternates 10 ms / 20 ms.
  static QosTarget default_target(int index, TrafficLevel level) {
    const TrafficProfile p = TrafficProfile::of(level);
    return QosTarget{index, 0.5 * p.lo_mbps, index % 2 == 0 ? 10.0 : 20.0};
  }

  std::vector<QosTarget> slice_targets() const {
    std::vector<QosTarget> out;
    for (int i = 0; i < slice_count; ++i) {
      QosTarget t = default_target(i, traffic);
      if (static_cast<std::size_t>(i) < slice_overrides.size()) {
        if (slice_overrides[i].q_mbps) t.q_target_mbps = *slice_overrides[i].q_mbps;
        if (slice_overrides[i].d_ms) t.d_target_ms = *slice_overrides[i].d_ms;
      }
      out.push_back(t);
    }
    return out;
  }

  /// Even split unless every slice names its own UE count.
  std::map<int, int> assignment() const {
    const auto targets = slice_targets();
    bool explicit_counts = slice_overrides.size() >= static_cast<std::size_t>(slice_count);
    for (int i = 0; explicit_counts && i < slice_count; ++i) explicit_counts = slice_overrides[i].ues.has_value();
    if (!explicit_counts) return even_assignment(ues, targets);
    std::map<int, int> out;
    int next = 0;
    for (int i = 0; i < slice_count; ++i)
      for (int k = 0; k < *slice_overrides[i].ues; ++k) out[next++] = targets[i].slice_id;
    return out;
  }

  Scenario scenario() const {
    Scenario sc;
    sc.frame = frame;
    sc.slices = slice_targets();
    sc.assignment = assignment();
    sc.traffic = TrafficProfile::of(traffic, packet_bytes);
    sc.churn = churn;
    sc.seed = seed;
    sc.lambda_q = lambda_q;
    sc.lambda_d = lambda_d;
    return sc;
  }

  VariantSpec variant_spec() const { return parse_variant(variant); }

  /// Cross-checks everything before a run.
  void validate() const {
    frame.validate();
    if (slice_count < 1) throw ConfigError("slices must be >= 1");
    if (ues < 0) throw ConfigError("ues must be >= 0");
    if (packet_bytes <= 0) throw ConfigError("traffic.packet_bytes must be > 0");
    if (slice_overrides.size() > static_cast<std::size_t>(slice_count))
      throw ConfigError("slice." + std::to_string(slice_overrides.size() - 1) + " is beyond slices = " +
                        std::to_string(slice_count));
    for (const auto& t : slice_targets()) t.validate();
    for (std::size_t i = 0; i < slice_overrides.size(); ++i)
      if (slice_overrides[i].ues && *slice_overrides[i].ues < 0)
        throw ConfigError("slice." + std::to_string(i) + ".ues must be >= 0");
    if (lambda_q < 0.0 || lambda_d < 0.0) throw ConfigError("reward.lambda_q and reward.lambda_d must be >= 0");
    if (churn.detach_prob < 0.0 || churn.detach_prob > 1.0 || churn.attach_prob < 0.0 || churn.attach_prob > 1.0)
      throw ConfigError("churn probabilities must lie in [0,1]");
    train.validate();
    if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
    if (q_ref_mbps <= 0.0 || d_ref_ms <= 0.0) throw ConfigError("agent.q_ref_mbps and agent.d_ref_ms must be > 0");
    if (eval_episodes < 1 || eval_steps < 1) throw ConfigError("eval.episodes and eval.steps must be >= 1");
    if (e2_grace_steps < 0) throw ConfigError("e2.grace_steps must be >= 0");
    const VariantSpec v = variant_spec();
    v.validate(frame);
    if (v.learns()) {
      AgentConfig a = agent_config_for(v, scenario(), agent);
      a.validate();
    }
  }

  void set(const std::string& key, const std::string& value) { entry(key).set(value); }

  /// Every key with its resolved value, one per line, in a fixed order.
  /// output_dir is left out: where results land does not change them.
  std::string dump() const {
    std::ostringstream s;
    auto& self = const_cast<ExperimentConfig&>(*this);
    for (const auto& e : self.entries())
      if (e.key != "output_dir") s << e.key << " = " << e.get() << '\n';
    const auto targets = slice_targets();
    for (std::size_t i = 0; i < targets.size(); ++i) {
      s << "slice." << i << ".q_mbps = " << fmt(targets[i].q_target_mbps) << '\n';
      s << "slice." << i << ".d_ms = " << fmt(targets[i].d_target_ms) << '\n';
    }
    for (const auto& [ue, slice] : assignment()) s << "assign.ue" << ue << " = slice " << slice << '\n';
    return s.str();
  }

  /// Shortest text that parses back to the same double.
  static std::string fmt(double v) {
    char buf[40];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
  }

 private:
  struct Entry {
    std::string key;
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
  };

  template <typename T>
  static T parse_number(const std::string& v) {
    T out{};
    const char* b = v.data();
    const char* e = v.data() + v.size();
    auto [p, ec] = std::from_chars(b, e, out);
    if (ec != std::errc() || p != e) throw ConfigError("'" + v + "' is not a valid number");
    return out;
  }

  static bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("'" + v + "' is not a boolean (true/false)");
  }

  template <typename T>
  static Entry num(std::string key, T& field) {
    return {std::move(key), [&field](const std::string& v) { field = parse_number<T>(v); },
            [&field] {
              if constexpr (std::is_floating_point_v<T>) return fmt(field);
              else return std::to_string(field);
            }};
  }

  static Entry flag(std::string key, bool& field) {
    return {std::move(key), [&field](const std::string& v) { field = parse_bool(v); },
            [&field] { return std::string(field ? "true" : "false"); }};
  }

  std::vector<Entry> entries() {
    std::vector<Entry> e;
    e.push_back(num("seed", seed));
    e.push_back({"output_dir", [this](const std::string& v) { output_dir = v; }, [this] { return output_dir; }});
    e.push_back({"variant",
                 [this](const std::string& v) {
                   parse_variant(v);
                   variant = v;
                 },
                 [this] { return variant; }});
    e.push_back(num("frame.mu", frame.mu));
    e.push_back(num("frame.prb_total", frame.prb_total));
    e.push_back(num("frame.frames_per_step", frame.frames_per_step));
    e.push_back({"traffic", [this](const std::string& v) { traffic = parse_traffic_level(v); },
                 [this] { return to_string(traffic); }});
    e.push_back(num("traffic.packet_bytes", packet_bytes));
    e.push_back(num("ues", ues));
    e.push_back(num("slices", slice_count));
    e.push_back(num("reward.lambda_q", lambda_q));
    e.push_back(num("reward.lambda_d", lambda_d));
    e.push_back(flag("churn.enabled", churn.enabled));
    e.push_back(num("churn.detach_prob", churn.detach_prob));
    e.push_back(num("churn.attach_prob", churn.attach_prob));
    e.push_back(num("train.gamma", train.gamma));
    e.push_back(num("train.lambda", train.lam));
    e.push_back(num("train.clip_eps", train.clip_eps));
    e.push_back(num("train.huber_zeta", train.huber_zeta));
    e.push_back(num("train.lr_actor", train.lr_actor));
    e.push_back(num("train.lr_critic", train.lr_critic));
    e.push_back(num("train.horizon", train.horizon));
    e.push_back(num("train.epochs", train.epochs));
    e.push_back(num("train.minibatch", train.minibatch));
    e.push_back(num("train.total_timesteps", train.total_timesteps));
    e.push_back(flag("train.normalize_advantages", train.normalize_advantages));
    e.push_back(num("train.entropy_coef", train.entropy_coef));
    e.push_back(num("train.max_grad_norm", train.max_grad_norm));
    e.push_back({"train.optimizer",
                 [this](const std::string& v) {
                   if (v == "adam") train.optimizer = Optimizer::kAdam;
                   else if (v == "sgd") train.optimizer = Optimizer::kSgd;
                   else throw ConfigError("optimizer must be adam or sgd");
                 },
                 [this] { return std::string(train.optimizer == Optimizer::kAdam ? "adam" : "sgd"); }});
    e.push_back(num("train.episode_steps", train.episode_steps));
    e.push_back(num("train.checkpoint_every", checkpoint_every));
    e.push_back(num("agent.d", agent.encoder.d));
    e.push_back(num("agent.layers", agent.encoder.layers));
    e.push_back(num("agent.heads", agent.encoder.heads));
    e.push_back(num("agent.ffn_hidden", agent.encoder.ffn_hidden));
    e.push_back(num("agent.hidden", agent.hidden));
    e.push_back(flag("agent.shared_encoder", agent.shared_encoder));
    e.push_back(flag("agent.value_norm", agent.value_norm));
    e.push_back(num("agent.log_std_init", agent.log_std_init));
    e.push_back(num("agent.q_ref_mbps", q_ref_mbps));
    e.push_back(num("agent.d_ref_ms", d_ref_ms));
    e.push_back(num("eval.episodes", eval_episodes));
    e.push_back(num("eval.steps", eval_steps));
    e.push_back(num("e2.policy_timeout_ms", e2_policy_timeout_ms));
    e.push_back(num("e2.grace_steps", e2_grace_steps));
    return e;
  }

  Entry entry(const std::string& key) {
    if (key.rfind("slice.", 0) == 0) return slice_entry(key);
    for (auto& e : entries())
      if (e.key == key) return e;
    throw ConfigError("unknown key '" + key + "'");
  }

  // slice.<i>.q_mbps | slice.<i>.d_ms | slice.<i>.ues
  Entry slice_entry(const std::string& key) {
    const auto dot = key.find('.', 6);
    if (dot == std::string::npos) throw ConfigError("unknown key '" + key + "'");
    int idx = 0;
    try {
      idx = parse_number<int>(key.substr(6, dot - 6));
    } catch (const ConfigError&) {
      throw ConfigError("unknown key '" + key + "'");
    }
    if (idx < 0 || idx > 1023) throw ConfigError("slice index out of range in '" + key + "'");
    const std::string field = key.substr(dot + 1);
    if (field != "q_mbps" && field != "d_ms" && field != "ues") throw ConfigError("unknown key '" + key + "'");
    return {key,
            [this, idx, field](const std::string& v) {
              if (slice_overrides.size() <= static_cast<std::size_t>(idx)) slice_overrides.resize(idx + 1);
              SliceSpec& s = slice_overrides[idx];
              if (field == "q_mbps") s.q_mbps = parse_number<double>(v);
              else if (field == "d_ms") s.d_ms = parse_number<double>(v);
              else s.ues = parse_number<int>(v);
            },
            [] { return std::string(); }};
  }
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Applies "key = value" lines from `text`; errors carry `source:line`.
inline void apply_config_text(ExperimentConfig& cfg, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": missing key");
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg;
  apply_config_text(cfg, ss.str(), path);
  return cfg;
}

/// "key=value" overrides from the command line, applied in order.
inline void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set " + kv + ": expected key=value");
    try {
      cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("--set " + kv + ": " + e.what());
    }
  }
}

}  // namespace eexapp
