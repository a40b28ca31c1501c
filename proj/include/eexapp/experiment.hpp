#pragma once

// Experiment drivers behind the command-line subcommands. Every output file
// is a pure function of the resolved config and seed.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "eexapp/config.hpp"
#include "eexapp/e2link.hpp"

namespace eexapp {

namespace fs = std::filesystem;

inline std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return os;
}

inline std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline void write_metrics_header(MetricsWriter& w, const ExperimentConfig& cfg) {
  w.comment("eexapp metrics");
  w.comment(cfg.dump());
  w.header();
}

/// Mean of r_total, sleep and violation ratio over the last `window` records.
struct TailStats {
  double reward = 0.0;
  double sleep_ratio = 0.0;
  double violation_ratio = 0.0;
  std::int64_t n = 0;
};

inline TailStats tail_stats(std::span<const StepRecord> recs, std::int64_t window) {
  TailStats s;
  const std::size_t from = recs.size() > static_cast<std::size_t>(window) ? recs.size() - static_cast<std::size_t>(window) : 0;
  for (std::size_t i = from; i < recs.size(); ++i) {
    s.reward += recs[i].r_total;
    s.sleep_ratio += recs[i].sleep_ratio;
    s.violation_ratio += recs[i].violation_ratio;
    ++s.n;
  }
  if (s.n) {
    s.reward /= static_cast<double>(s.n);
    s.sleep_ratio /= static_cast<double>(s.n);
    s.violation_ratio /= static_cast<double>(s.n);
  }
  return s;
}

struct TrainOutcome {
  std::vector<StepRecord> records;
  std::unique_ptr<Agent> agent;  // null for static variants
};

/// Trains (or, for static variants, just runs) the configured variant for
/// train.total_timesteps, writing metrics.csv and checkpoints under `out`.
inline TrainOutcome run_train(const ExperimentConfig& cfg, const fs::path& out, bool write_files = true) {
  cfg.validate();
  const Scenario sc = cfg.scenario();
  const VariantSpec spec = cfg.variant_spec();
  std::ofstream metrics;
  std::optional<MetricsWriter> writer;
  if (write_files) {
    metrics = open_output(out / "metrics.csv");
    writer.emplace(metrics);
    write_metrics_header(*writer, cfg);
  }
  auto on_step = [&](const StepRecord& r) {
    if (writer) writer->append(r);
  };
  TrainOutcome res;
  LocalEnv env(sc);
  if (!spec.learns()) {
    auto ctl = static_controller(spec, sc);
    res.records = run_controller(env, *ctl, cfg.train.total_timesteps, cfg.seed, on_step);
    return res;
  }
  res.agent = build_agent(spec, sc, cfg.seed, cfg.agent, cfg.q_ref_mbps, cfg.d_ref_ms);
  TrainHooks hooks;
  hooks.on_step = on_step;
  if (write_files && cfg.checkpoint_every > 0)
    hooks.on_update = [&](std::int64_t k, Agent& a) {
      if (k % cfg.checkpoint_every == 0) {
        fs::create_directories(out / "checkpoints");
        a.save((out / "checkpoints" / ("update_" + std::to_string(k) + ".ckpt")).string());
      }
    };
  res.records = train(env, *res.agent, cfg.train, cfg.seed, hooks);
  if (write_files) {
    fs::create_directories(out / "checkpoints");
    res.agent->save((out / "checkpoints" / "final.ckpt").string());
  }
  return res;
}

/// Deterministic evaluation of a checkpoint (learning variants) or of the
/// static policy itself.
inline EvalSummary run_eval(const ExperimentConfig& cfg, const std::string& checkpoint) {
  cfg.validate();
  const Scenario sc = cfg.scenario();
  const VariantSpec spec = cfg.variant_spec();
  LocalEnv env(sc);
  if (!spec.learns()) {
    auto ctl = static_controller(spec, sc);
    return evaluate(env, *ctl, cfg.eval_episodes, cfg.eval_steps, cfg.seed);
  }
  if (checkpoint.empty()) throw ConfigError("eval of a learning variant needs --checkpoint");
  auto agent = build_agent(spec, sc, cfg.seed, cfg.agent, cfg.q_ref_mbps, cfg.d_ref_ms);
  agent->load(checkpoint);
  AgentController ctl(*agent, sc.frame, true);
  return evaluate(env, ctl, cfg.eval_episodes, cfg.eval_steps, cfg.seed);
}

inline void write_eval_csv(std::ostream& os, const ExperimentConfig& cfg, const EvalSummary& s) {
  MetricsWriter(os).comment("eexapp evaluation\n" + cfg.dump());
  os << "scope,slice_id,mean_reward,sleep_ratio,violation_ratio,mean_q_mbps,mean_d_ms,pairs\n";
  os << "all,," << fmt9(s.mean_reward) << ',' << fmt9(s.mean_sleep_ratio) << ',' << fmt9(s.violation_ratio) << ",,,"
     << s.steps << '\n';
  for (const auto& t : s.per_slice) {
    const double n = t.pairs ? static_cast<double>(t.pairs) : 1.0;
    os << "slice," << t.slice_id << ",,," << fmt9(t.pairs ? static_cast<double>(t.violations) / n : 0.0) << ','
       << fmt9(t.sum_q_mbps / n) << ',' << fmt9(t.sum_d_ms / n) << ',' << t.pairs << '\n';
  }
}

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  TailStats tail;
};

inline std::vector<std::string> default_ablation_variants() { return {"eexapp", "wo_trans", "wo_gat", "wo_both"}; }

/// Trains every variant on `seeds` paired seeds (seed, seed+1, ...). Writes
/// <variant>/seed_<s>/metrics.csv and comparison.csv.
inline std::vector<AblationRow> run_ablate(const ExperimentConfig& base, const std::vector<std::string>& variants,
                                           int seeds, std::int64_t window, const fs::path& out,
                                           bool write_files = true) {
  if (seeds < 1) throw ConfigError("ablate needs at least one seed");
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    for (int k = 0; k < seeds; ++k) {
      ExperimentConfig cfg = base;
      cfg.variant = v;
      cfg.seed = base.seed + static_cast<std::uint64_t>(k);
      const auto res = run_train(cfg, out / v / ("seed_" + std::to_string(cfg.seed)), write_files);
      rows.push_back({v, cfg.seed, tail_stats(res.records, window)});
    }
  }
  if (write_files) {
    auto os = open_output(out / "comparison.csv");
    MetricsWriter(os).comment("eexapp ablation, final-window means over " + std::to_string(window) + " steps\n" +
                              base.dump());
    os << "variant,seed,final_reward,final_sleep_ratio,final_violation_ratio\n";
    for (const auto& r : rows)
      os << r.variant << ',' << r.seed << ',' << fmt9(r.tail.reward) << ',' << fmt9(r.tail.sleep_ratio) << ','
         << fmt9(r.tail.violation_ratio) << '\n';
    os << "variant,mean_final_reward,stderr,mean_sleep_ratio,mean_violation_ratio\n";
    for (const auto& v : variants) {
      std::vector<double> r;
      double sl = 0.0, vi = 0.0;
      for (const auto& row : rows)
        if (row.variant == v) {
          r.push_back(row.tail.reward);
          sl += row.tail.sleep_ratio;
          vi += row.tail.violation_ratio;
        }
      const double n = static_cast<double>(r.size());
      const double mean = std::accumulate(r.begin(), r.end(), 0.0) / n;
      double var = 0.0;
      for (double x : r) var += (x - mean) * (x - mean);
      const double se = r.size() > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
      os << v << ',' << fmt9(mean) << ',' << fmt9(se) << ',' << fmt9(sl / n) << ',' << fmt9(vi / n) << '\n';
    }
  }
  return rows;
}

struct GridCell {
  TrafficLevel traffic = TrafficLevel::kLight;
  int slices = 2;
  std::vector<EvalSummary> per_variant;
};

/// {light, medium, heavy} x {2, 4, 8} slices, 8 UEs split evenly. Each
/// learning variant is trained then evaluated deterministically; static
/// variants are evaluated directly. Writes grid.csv (one row per cell).
inline std::vector<GridCell> run_scenario_grid(const ExperimentConfig& base, const std::vector<std::string>& variants,
                                               const fs::path& out, bool write_files = true) {
  std::vector<GridCell> cells;
  for (TrafficLevel level : {TrafficLevel::kLight, TrafficLevel::kMedium, TrafficLevel::kHeavy}) {
    for (int slices : {2, 4, 8}) {
      GridCell cell{level, slices, {}};
      for (const auto& v : variants) {
        ExperimentConfig cfg = base;
        cfg.traffic = level;
        cfg.slice_count = slices;
        cfg.slice_overrides.clear();
        cfg.ues = 8;
        cfg.variant = v;
        const fs::path dir = out / (to_string(level) + "_" + std::to_string(slices)) / v;
        const VariantSpec spec = cfg.variant_spec();
        if (spec.learns()) {
          auto res = run_train(cfg, dir, write_files);
          LocalEnv env(cfg.scenario());
          AgentController ctl(*res.agent, cfg.frame, true);
          cell.per_variant.push_back(evaluate(env, ctl, cfg.eval_episodes, cfg.eval_steps, cfg.seed));
        } else {
          cell.per_variant.push_back(run_eval(cfg, ""));
        }
      }
      cells.push_back(std::move(cell));
    }
  }
  if (write_files) {
    auto os = open_output(out / "grid.csv");
    MetricsWriter(os).comment("eexapp scenario grid, deterministic evaluation\n" + base.dump());
    os << "traffic,slices";
    for (const auto& v : variants) os << ',' << v << "_reward," << v << "_sleep_ratio," << v << "_violation_ratio";
    os << '\n';
    for (const auto& c : cells) {
      os << to_string(c.traffic) << ',' << c.slices;
      for (const auto& s : c.per_variant)
        os << ',' << fmt9(s.mean_reward) << ',' << fmt9(s.mean_sleep_ratio) << ',' << fmt9(s.violation_ratio);
      os << '\n';
    }
  }
  return cells;
}

/// Accepts one RIC connection and runs the cell for it. `steps` = 0 runs
/// until the RIC says BYE. Writes du_trace.csv into `out` when non-empty.
inline e2::DuReport run_du(const ExperimentConfig& cfg, e2::LineSocket& link, std::int64_t steps, const fs::path& out,
                           std::ostream* record) {
  cfg.validate();
  Simulator sim = cfg.scenario().make_simulator();
  e2::DuOptions opt;
  opt.policy_timeout_ms = cfg.e2_policy_timeout_ms;
  opt.grace_steps = cfg.e2_grace_steps;
  opt.max_steps = steps;
  std::ofstream trace;
  std::optional<TraceWriter> tw;
  if (!out.empty()) {
    trace = open_output(out / "du_trace.csv");
    tw.emplace(trace);
    tw->header();
  }
  auto rep = e2::serve_du(sim, link, opt, record, [&](const StepOutcome& o) {
    if (tw) tw->append(o);
  });
  trace.flush();
  return rep;
}

/// RIC side. With a checkpoint (or a static variant) it only acts; with a
/// learning variant and no checkpoint it trains over the link exactly as
/// `train` does in-process, writing the same metrics.csv.
inline std::vector<StepRecord> run_ric_session(const ExperimentConfig& cfg, e2::LineSocket& link,
                                               const std::string& checkpoint, std::int64_t steps, const fs::path& out,
                                               std::ostream* record) {
  cfg.validate();
  const Scenario sc = cfg.scenario();
  const VariantSpec spec = cfg.variant_spec();
  std::ofstream metrics = open_output(out / "metrics.csv");
  MetricsWriter w(metrics);
  write_metrics_header(w, cfg);
  auto on_step = [&](const StepRecord& r) { w.append(r); };

  if (spec.learns() && checkpoint.empty()) {
    if (cfg.train.episode_steps != 0) throw ConfigError("networked training needs train.episode_steps = 0");
    e2::RemoteEnv env(link, sc, -1, record);
    auto agent = build_agent(spec, sc, cfg.seed, cfg.agent, cfg.q_ref_mbps, cfg.d_ref_ms);
    TrainHooks hooks;
    hooks.on_step = on_step;
    auto recs = train(env, *agent, cfg.train, cfg.seed, hooks);
    env.bye();
    fs::create_directories(out / "checkpoints");
    agent->save((out / "checkpoints" / "final.ckpt").string());
    return recs;
  }
  std::unique_ptr<Agent> agent;
  std::unique_ptr<Controller> ctl;
  if (spec.learns()) {
    agent = build_agent(spec, sc, cfg.seed, cfg.agent, cfg.q_ref_mbps, cfg.d_ref_ms);
    agent->load(checkpoint);
    ctl = std::make_unique<AgentController>(*agent, sc.frame, true);
  } else {
    ctl = static_controller(spec, sc);
  }
  return e2::run_ric(link, sc, *ctl, steps, cfg.seed, record, on_step);
}

inline void write_replay_csv(std::ostream& os, const ExperimentConfig& cfg, const std::vector<e2::ReplayRow>& rows) {
  MetricsWriter(os).comment("eexapp replay\n" + cfg.dump());
  os << "t,k,recorded_b,agent_b,agent_class,recorded_r_total,recorded_violation_ratio\n";
  for (const auto& r : rows)
    os << r.t << ',' << r.k << ',' << r.recorded_b << ',' << r.agent_b << ',' << r.agent_class << ','
       << fmt9(r.recorded_r_total) << ',' << fmt9(r.recorded_violation_ratio) << '\n';
}

}  // namespace eexapp
