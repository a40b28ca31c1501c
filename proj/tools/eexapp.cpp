// eexapp command-line front end.
//
//   eexapp train         [--config F] [--set k=v]... [--out DIR]
//   eexapp eval          --checkpoint C
//   eexapp ablate        [--variants a,b,...] [--seeds N] [--window W]
//   eexapp scenario-grid [--variants a,b,...]
//   eexapp serve-du      --listen HOST:PORT [--steps N] [--record F]
//   eexapp run-ric       --connect HOST:PORT [--checkpoint C] [--steps N] [--record F]
//   eexapp replay        --record F --checkpoint C
//
// Exit codes: 0 success, 2 config error, 3 runtime error, 4 protocol error.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "eexapp/experiment.hpp"

namespace {

using namespace eexapp;

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitProtocol = 4;

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out;

  void attach(CLI::App* app) {
    app->add_option("--config,-c", config_path, "config file (key = value lines)");
    app->add_option("--set,-s", sets, "override one key, e.g. --set train.total_timesteps=5000")->allow_extra_args(false);
    app->add_option("--out,-o", out, "output directory (overrides output_dir)");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config_file(config_path);
    apply_overrides(cfg, sets);
    if (!out.empty()) cfg.output_dir = out;
    cfg.validate();
    return cfg;
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char ch : s) {
    if (ch == '(') ++depth;
    if (ch == ')') --depth;
    if (ch == ',' && depth == 0) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  for (const auto& v : out) parse_variant(v);
  return out;
}

void print_tail(const char* label, const TailStats& s) {
  std::printf("%s: reward %.6f  sleep %.4f  violation %.4f  (last %lld steps)\n", label, s.reward, s.sleep_ratio,
              s.violation_ratio, static_cast<long long>(s.n));
}

int run(int argc, char** argv) {
  CLI::App app{"Energy-efficient sleep scheduling and slicing controller"};
  app.require_subcommand(1);

  Common c_train, c_eval, c_ablate, c_grid, c_du, c_ric, c_replay;
  std::string checkpoint, record, listen, connect, variants;
  std::int64_t steps = 0, window = 1000;
  int seeds = 5;

  auto* train_cmd = app.add_subcommand("train", "train (or roll out) the configured variant");
  c_train.attach(train_cmd);
  train_cmd->add_option("--window", window, "steps in the final-window summary")->check(CLI::PositiveNumber);

  auto* eval_cmd = app.add_subcommand("eval", "deterministic evaluation");
  c_eval.attach(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint to evaluate (learning variants)");

  auto* ablate_cmd = app.add_subcommand("ablate", "train every ablation variant on paired seeds");
  c_ablate.attach(ablate_cmd);
  ablate_cmd->add_option("--variants", variants, "comma-separated variants (default eexapp,wo_trans,wo_gat,wo_both)");
  ablate_cmd->add_option("--seeds", seeds, "paired seeds seed, seed+1, ...")->check(CLI::PositiveNumber);
  ablate_cmd->add_option("--window", window, "final-window length for the comparison")->check(CLI::PositiveNumber);

  auto* grid_cmd = app.add_subcommand("scenario-grid", "{light,medium,heavy} x {2,4,8} slices, 8 UEs");
  c_grid.attach(grid_cmd);
  grid_cmd->add_option("--variants", variants, "comma-separated variants (default eexapp,sasc)");

  auto* du_cmd = app.add_subcommand("serve-du", "simulated cell answering one RIC over e2link");
  c_du.attach(du_cmd);
  du_cmd->add_option("--listen", listen, "HOST:PORT to listen on")->required();
  du_cmd->add_option("--steps", steps, "stop after N steps (0 = until BYE)");
  du_cmd->add_option("--record", record, "append every sent/received line to this file");

  auto* ric_cmd = app.add_subcommand("run-ric", "controller side of e2link; trains unless given a checkpoint");
  c_ric.attach(ric_cmd);
  ric_cmd->add_option("--connect", connect, "DU HOST:PORT")->required();
  ric_cmd->add_option("--checkpoint", checkpoint, "act with this checkpoint instead of training");
  ric_cmd->add_option("--steps", steps, "steps when acting (training uses train.total_timesteps)");
  ric_cmd->add_option("--record", record, "append every sent/received line to this file");

  auto* replay_cmd = app.add_subcommand("replay", "re-score a recorded session against a checkpoint");
  c_replay.attach(replay_cmd);
  replay_cmd->add_option("--record", record, "recorded e2link session")->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--checkpoint", checkpoint, "checkpoint (learning variants)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  if (train_cmd->parsed()) {
    const ExperimentConfig cfg = c_train.resolve();
    const auto res = run_train(cfg, cfg.output_dir);
    if (!res.records.empty()) print_tail("final", tail_stats(res.records, window));
    std::printf("wrote %s/metrics.csv\n", cfg.output_dir.c_str());
    return 0;
  }
  if (eval_cmd->parsed()) {
    const ExperimentConfig cfg = c_eval.resolve();
    const EvalSummary s = run_eval(cfg, checkpoint);
    auto os = open_output(fs::path(cfg.output_dir) / "eval.csv");
    write_eval_csv(os, cfg, s);
    std::printf("eval: reward %.6f  sleep %.4f  violation %.4f  (%lld steps)\n", s.mean_reward, s.mean_sleep_ratio,
                s.violation_ratio, static_cast<long long>(s.steps));
    return 0;
  }
  if (ablate_cmd->parsed()) {
    const ExperimentConfig cfg = c_ablate.resolve();
    const auto vs = variants.empty() ? default_ablation_variants() : split_list(variants);
    const auto rows = run_ablate(cfg, vs, seeds, window, cfg.output_dir);
    for (const auto& r : rows) print_tail((r.variant + " seed " + std::to_string(r.seed)).c_str(), r.tail);
    std::printf("wrote %s/comparison.csv\n", cfg.output_dir.c_str());
    return 0;
  }
  if (grid_cmd->parsed()) {
    const ExperimentConfig cfg = c_grid.resolve();
    const auto vs = variants.empty() ? std::vector<std::string>{"eexapp", "sasc"} : split_list(variants);
    run_scenario_grid(cfg, vs, cfg.output_dir);
    std::printf("wrote %s/grid.csv\n", cfg.output_dir.c_str());
    return 0;
  }
  std::ofstream rec;
  auto open_record = [&]() -> std::ostream* {
    if (record.empty()) return nullptr;
    rec = open_output(record);
    return &rec;
  };
  if (du_cmd->parsed()) {
    const ExperimentConfig cfg = c_du.resolve();
    e2::Listener listener(e2::parse_endpoint(listen));
    std::fprintf(stderr, "serve-du: listening on port %d\n", listener.port());
    e2::LineSocket link = listener.accept();
    const auto rep = run_du(cfg, link, steps, cfg.output_dir, open_record());
    std::printf("serve-du: %lld steps, %lld late, %lld fallback%s\n", static_cast<long long>(rep.steps),
                static_cast<long long>(rep.late_steps), static_cast<long long>(rep.fallback_steps),
                rep.link_lost ? ", link lost" : "");
    return 0;
  }
  if (ric_cmd->parsed()) {
    const ExperimentConfig cfg = c_ric.resolve();
    e2::LineSocket link = e2::connect_to(e2::parse_endpoint(connect));
    const auto recs = run_ric_session(cfg, link, checkpoint, steps, cfg.output_dir, open_record());
    if (!recs.empty()) print_tail("final", tail_stats(recs, window));
    std::printf("wrote %s/metrics.csv\n", cfg.output_dir.c_str());
    return 0;
  }
  if (replay_cmd->parsed()) {
    const ExperimentConfig cfg = c_replay.resolve();
    const Scenario sc = cfg.scenario();
    const VariantSpec spec = cfg.variant_spec();
    std::unique_ptr<Agent> agent;
    std::unique_ptr<Controller> ctl;
    if (spec.learns()) {
      if (checkpoint.empty()) throw ConfigError("replay of a learning variant needs --checkpoint");
      agent = build_agent(spec, sc, cfg.seed, cfg.agent, cfg.q_ref_mbps, cfg.d_ref_ms);
      agent->load(checkpoint);
      ctl = std::make_unique<AgentController>(*agent, sc.frame, true);
    } else {
      ctl = static_controller(spec, sc);
    }
    std::ifstream in(record, std::ios::binary);
    const auto rows = e2::replay(in, sc, *ctl, cfg.seed);
    auto os = open_output(fs::path(cfg.output_dir) / "replay.csv");
    write_replay_csv(os, cfg, rows);
    std::printf("replay: %zu steps re-scored, wrote %s/replay.csv\n", rows.size(), cfg.output_dir.c_str());
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const eexapp::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const eexapp::ArgumentError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const eexapp::ProtocolError& e) {
    std::fprintf(stderr, "protocol error: %s\n", e.what());
    return kExitProtocol;
  } catch (const eexapp::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime error: %s\n", e.what());
    return kExitRuntime;
  }
}
