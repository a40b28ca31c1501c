// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance            all criteria
//   acceptance 1 4 10     a subset
//
// Exits 0 only if every selected criterion passes.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <set>
#include <sstream>

#include "eexapp/experiment.hpp"
#include "support/gradcheck.hpp"

using namespace eexapp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("eexapp_acceptance_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- 1

Outcome numerical_core() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t cases = 0;
  for (const auto& list : {gradcheck::operator_cases(), gradcheck::composite_cases()})
    for (const auto& c : list) {
      ++cases;
      for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const double e = c.run(seed);
        if (!(e <= worst)) {
          worst = e;
          worst_name = c.name;
        }
      }
    }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst < gradcheck::kTolerance && secs < 60.0,
          fmt("%zu cases x 100 seeds, worst rel err %.2e (%s) < 1e-4, %.1f s < 60 s", cases, worst, worst_name.c_str(),
              secs)};
}

// ---------------------------------------------------------------- 2

Outcome encoder_sets() {
  Engine rng(2);
  EncoderConfig cfg;
  cfg.f_in = kNumFeatures + 4 + 2;
  StateEncoder enc("enc", cfg, EncoderKind::kTransformer, rng);
  nn::ParamList ps;
  enc.collect(ps);
  for (auto* p : ps)
    for (double& v : p->value.data) v += uniform(rng, -0.1, 0.1);
  double perm = 0.0, dup = 0.0;
  bool dims = true;
  for (std::size_t k = 1; k <= 32; ++k) {
    for (int trial = 0; trial < 5; ++trial) {
      nn::Tensor x(k, cfg.f_in);
      for (double& v : x.data) v = uniform(rng, -2.0, 2.0);
      const auto base = enc.encode(x).vector;
      dims = dims && base.size() == 64;
      auto shuffled = [&](const nn::Tensor& t) {
        std::vector<std::size_t> order(t.rows());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
        nn::Tensor out(t.rows(), t.cols());
        for (std::size_t r = 0; r < t.rows(); ++r)
          std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(order[r] * t.cols()), t.cols(),
                      out.data.begin() + static_cast<std::ptrdiff_t>(r * t.cols()));
        return out;
      };
      nn::Tensor twice(2 * k, cfg.f_in);
      std::copy(x.data.begin(), x.data.end(), twice.data.begin());
      std::copy(x.data.begin(), x.data.end(), twice.data.begin() + static_cast<std::ptrdiff_t>(x.data.size()));
      const auto p = enc.encode(shuffled(x)).vector;
      const auto d = enc.encode(shuffled(twice)).vector;
      for (std::size_t j = 0; j < base.size(); ++j) {
        perm = std::max(perm, std::abs(base[j] - p[j]));
        dup = std::max(dup, std::abs(base[j] - d[j]));
      }
    }
  }
  return {dims && perm < 1e-9 && dup < 1e-9,
          fmt("K=1..32, d=64: %s; permutation max diff %.1e < 1e-9; duplicate max diff %.1e < 1e-9",
              dims ? "yes" : "NO", perm, dup)};
}

// ---------------------------------------------------------------- 3

// Two-source softmax over i for each target j, written with a logistic.
std::array<double, 2> gat_oracle(double va, double vb, const GatWeights& w, double gamma[2][2]) {
  auto lrelu = [](double x) { return x > 0.0 ? x : 0.2 * x; };
  const double v[2] = {va, vb};
  std::array<double, 2> out{};
  for (int j = 0; j < 2; ++j) {
    const double e0 = lrelu(w.p0 * w.w_s * va + w.p1 * w.w_t * v[j]);
    const double e1 = lrelu(w.p0 * w.w_s * vb + w.p1 * w.w_t * v[j]);
    gamma[0][j] = 1.0 / (1.0 + std::exp(e1 - e0));
    gamma[1][j] = 1.0 / (1.0 + std::exp(e0 - e1));
    out[j] = gamma[0][j] * w.w_s * va + gamma[1][j] * w.w_s * vb;
  }
  return out;
}

Outcome gat_correctness() {
  AgentConfig cfg;
  cfg.encoder.f_in = kNumFeatures + 2 + 2;
  cfg.encoder.d = 8;
  cfg.encoder.heads = 2;
  cfg.encoder.ffn_hidden = 16;
  cfg.hidden = 16;
  cfg.n_classes = 231;
  cfg.n_slices = 2;
  cfg.value_norm = false;
  SliceContext ctx;
  ctx.slices = {{0, 1.0, 10.0}, {1, 2.0, 20.0}};
  Agent agent(cfg, ctx, 3);
  Engine rng(3);
  nn::ParamList critics = agent.critic_params();
  double worst = 0.0, col = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const GatWeights w{uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -1, 1), uniform(rng, -1, 1)};
    agent.gat().set_weights(w);
    for (auto* p : critics)
      for (double& v : p->value.data) v = uniform(rng, -1.5, 1.5);
    nn::Tensor x(1 + uniform_index(rng, 6), cfg.encoder.f_in);
    for (double& v : x.data) v = uniform(rng, -2.0, 2.0);
    const CriticPair c = agent.evaluate(x);
    double gamma[2][2];
    const auto want = gat_oracle(c.v_alpha, c.v_beta, w, gamma);
    const double got[2] = {c.v_alpha_agg, c.v_beta_agg};
    for (int j = 0; j < 2; ++j) {
      worst = std::max(worst, std::abs(got[j] - want[j]) / std::max(1.0, std::abs(want[j])));
      col = std::max(col, std::abs(c.attention[0][j] + c.attention[1][j] - 1.0));
      for (int i = 0; i < 2; ++i) worst = std::max(worst, std::abs(c.attention[i][j] - gamma[i][j]));
    }
  }
  return {worst < 1e-12 && col < 1e-12,
          fmt("10^4 draws through evaluate(): max err %.1e < 1e-12; attention column sums off by %.1e", worst, col)};
}

// ---------------------------------------------------------------- 4

Outcome gae_correctness() {
  Engine rng(4);
  double worst = 0.0;
  int trajectories = 0;
  for (double gamma : {0.0, 0.5, 0.9, 0.99, 1.0})
    for (double lam : {0.0, 0.5, 0.95, 1.0})
      for (int trial = 0; trial < 500; ++trial, ++trajectories) {
        const std::size_t n = 1 + uniform_index(rng, 16);
        std::vector<double> r(n), v(n);
        std::unique_ptr<bool[]> done(new bool[n]);
        for (std::size_t t = 0; t < n; ++t) {
          r[t] = uniform(rng, -2, 2);
          v[t] = uniform(rng, -5, 5);
          done[t] = bernoulli(rng, 0.15);
        }
        const double last = uniform(rng, -5, 5);
        const auto g = compute_gae(r, v, std::span<const bool>(done.get(), n), last, gamma, lam);
        std::vector<double> delta(n);
        for (std::size_t k = 0; k < n; ++k)
          delta[k] = r[k] + gamma * (done[k] ? 0.0 : (k + 1 < n ? v[k + 1] : last)) - v[k];
        for (std::size_t t = 0; t < n; ++t) {
          double a = 0.0, w = 1.0;
          for (std::size_t l = t; l < n; ++l) {
            a += w * delta[l];
            if (done[l]) break;
            w *= gamma * lam;
          }
          worst = std::max({worst, std::abs(g.advantages[t] - a), std::abs(g.returns[t] - (v[t] + a))});
        }
      }
  return {worst < 1e-12,
          fmt("%d trajectories (len <= 16) over gamma x lambda grid incl. lambda=0,1: max diff %.1e < 1e-12", trajectories,
              worst)};
}

// ---------------------------------------------------------------- 5

Outcome clip_semantics() {
  ExperimentConfig ec;
  ec.ues = 8;
  ec.slice_count = 2;
  const Scenario sc = ec.scenario();
  AgentConfig small;
  small.encoder.d = 16;
  small.encoder.heads = 2;
  small.encoder.ffn_hidden = 32;
  small.hidden = 32;
  auto agent = build_agent(parse_variant("eexapp"), sc, 5, small);
  LocalEnv env(sc);
  Engine rng(5);
  const auto acts = enumerate_sleep_actions(sc.frame);
  StateObservation obs = env.reset(std::nullopt);
  double ratio_err = 0.0;
  bool zero_grad = true;
  for (int t = 0; t < 50; ++t) {
    const nn::Tensor f = agent->features(obs, true);
    const Decision d = agent->step(f, rng, false);
    const nn::Tensor* batch[] = {&f};
    const std::vector<int> cls = {d.policy.sleep_class};
    nn::Tensor raw(1, d.policy.beta_raw.size());
    raw.data = d.policy.beta_raw;
    {
      // (a) at the parameters that sampled the action, rho = 1.
      nn::Graph g;
      const HeadOutputs h = agent->forward(g, batch);
      const double la = nn::categorical_log_prob(h.logits, cls).value().item();
      const double lb = nn::gaussian_log_prob(h.mean, h.log_std, raw).value().item();
      ratio_err = std::max({ratio_err, std::abs(std::exp(la - d.policy.sleep_log_prob) - 1.0),
                            std::abs(std::exp(lb - d.policy.beta_log_prob) - 1.0)});
    }
    {
      // (b) rho = 1 + 2 eps with A > 0: the clipped constant wins and no
      // actor parameter receives gradient.
      const double eps = 0.2;
      nn::Graph g;
      const HeadOutputs h = agent->forward(g, batch);
      nn::Var la = nn::categorical_log_prob(h.logits, cls);
      nn::Var lb = nn::gaussian_log_prob(h.mean, h.log_std, raw);
      const std::vector<double> old_a = {la.value().item() - std::log(1.0 + 2 * eps)};
      const std::vector<double> old_b = {lb.value().item() - std::log(1.0 + 2 * eps)};
      const std::vector<double> adv = {uniform(rng, 0.1, 3.0)};
      nn::Var loss = nn::neg(nn::add(nn::sum(nn::clipped_surrogate(la, old_a, adv, eps)),
                                     nn::sum(nn::clipped_surrogate(lb, old_b, adv, eps))));
      for (auto* p : agent->actor_params()) p->zero_grad();
      g.backward(loss);
      for (auto* p : agent->actor_params())
        for (double gv : p->grad.data) zero_grad = zero_grad && gv == 0.0;
      for (auto* p : agent->actor_params()) p->zero_grad();
    }
    obs = env.step(acts[static_cast<std::size_t>(d.policy.sleep_class)], d.policy.beta).obs;
  }
  return {ratio_err < 1e-12 && zero_grad,
          fmt("50 sampled states, eps=0.2: |rho-1| at old params %.1e < 1e-12; clipped-branch actor gradient %s",
              ratio_err, zero_grad ? "exactly 0" : "NONZERO")};
}

// ---------------------------------------------------------------- 6

Outcome reward_identity() {
  Engine rng(6);
  const FrameConfig f;
  const auto acts = enumerate_sleep_actions(f);
  int mismatches = 0, saturated = 0, checked_sat = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const int n_slices = 1 + static_cast<int>(uniform_index(rng, 8));
    std::vector<QosTarget> tg;
    for (int i = 0; i < n_slices; ++i) tg.push_back({i, uniform(rng, 0.05, 8.0), uniform(rng, 1.0, 50.0)});
    StateObservation obs;
    const int k = static_cast<int>(uniform_index(rng, 17));
    for (int u = 0; u < k; ++u) {
      UeObservation ue;
      ue.ue_id = u;
      ue.slice_id = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n_slices)));
      ue.throughput_mbps = uniform(rng, 0.0, 10.0);
      ue.offered_mbps = bernoulli(rng, 0.2) ? 0.0 : uniform(rng, 0.0, 10.0);
      const double target = tg[static_cast<std::size_t>(ue.slice_id)].d_target_ms;
      ue.delay_ms = bernoulli(rng, 0.3) ? target * uniform(rng, 2.0, 50.0) : uniform(rng, 0.0, 3.0 * target);
      obs.ues.push_back(ue);
    }
    const auto r = compute_reward(obs, acts[uniform_index(rng, acts.size())], tg, uniform(rng, 0.0, 2.0),
                                  uniform(rng, 0.0, 2.0), f);
    if (r.r_alpha + r.r_beta != r.r_total) ++mismatches;
    for (const auto& ue : obs.ues)
      if (ue.delay_ms >= 2.0 * tg[static_cast<std::size_t>(ue.slice_id)].d_target_ms) {
        ++checked_sat;
        if (r.per_ue_delay_penalty.at(ue.ue_id) == 1.0) ++saturated;
      }
  }
  return {mismatches == 0 && saturated == checked_sat && checked_sat > 0,
          fmt("10^4 draws: %d with r_alpha + r_beta != r_total; delay penalty = 1 for %d/%d UEs with d >= 2D",
              mismatches, saturated, checked_sat)};
}

// ---------------------------------------------------------------- 7

Outcome simulator_conservation() {
  const std::vector<QosTarget> sl = {{0, 0.5, 10.0}, {1, 0.5, 20.0}};
  Simulator sim(FrameConfig{}, sl, even_assignment(8, sl), TrafficProfile::of(TrafficLevel::kHeavy), 7,
                ChurnConfig{true, 0.05, 0.2});
  const auto acts = enumerate_sleep_actions(FrameConfig{});
  Engine rng(7);
  std::int64_t broken = 0;
  for (int t = 0; t < 100000; ++t) {
    const double x = uniform01(rng);
    const auto o = sim.step(acts[uniform_index(rng, acts.size())], SliceAllocation{{x, 1.0 - x}});
    std::int64_t arrived = 0, served = 0, after = 0;
    for (const auto& u : o.ues) {
      if (u.queue_bits_before + u.arrived_bits - u.served_bits != u.queue_bits_after || u.served_bits < 0 ||
          u.queue_bits_after < 0)
        ++broken;
      arrived += u.arrived_bits;
      served += u.served_bits;
      after += u.queue_bits_after;
    }
    if (arrived != o.arrived_bits || served != o.served_bits || after != o.queued_bits) ++broken;
  }

  Simulator starve(FrameConfig{}, sl, even_assignment(8, sl), TrafficProfile::of(TrafficLevel::kMedium), 8);
  std::int64_t slice2 = 0, slice1 = 0;
  for (int t = 0; t < 1000; ++t)
    for (const auto& u : starve.step({20, 0, 0}, SliceAllocation{{1.0, 0.0}}).ues)
      (u.slice_id == 1 ? slice2 : slice1) += u.served_bits;

  Simulator sleepy(FrameConfig{}, sl, even_assignment(8, sl), TrafficProfile::of(TrafficLevel::kHeavy), 9);
  std::int64_t slept = 0;
  for (int t = 0; t < 1000; ++t) slept += sleepy.step({0, 20, 0}, SliceAllocation::uniform(2)).served_bits;

  return {broken == 0 && slice2 == 0 && slice1 > 0 && slept == 0,
          fmt("10^5 steps: %lld conservation violations; beta=[1,0] serves slice 2 %lld bits (slice 1 %lld); "
              "full sleep serves %lld bits",
              static_cast<long long>(broken), static_cast<long long>(slice2), static_cast<long long>(slice1),
              static_cast<long long>(slept))};
}

// ---------------------------------------------------------------- 8

Outcome learning_signal() {
  ExperimentConfig cfg;
  cfg.seed = 7;
  cfg.traffic = TrafficLevel::kLight;
  cfg.slice_count = 2;
  cfg.ues = 8;
  cfg.train.total_timesteps = 20000;
  const std::int64_t window = 1000;
  const auto t0 = std::chrono::steady_clock::now();

  auto tail_of = [&](const std::string& variant) {
    ExperimentConfig c = cfg;
    c.variant = variant;
    return tail_stats(run_train(c, {}, false).records, window);
  };
  const TailStats rnd = tail_of("random");
  TailStats best_static;
  int best_b = -1;
  std::string statics;
  for (int b : fixed_sleep_grid(cfg.frame)) {
    const TailStats s = tail_of("static_fixed_sleep(" + std::to_string(b) + ")");
    statics += fmt(" b=%d:%.4f", b, s.reward);
    if (best_b < 0 || s.reward > best_static.reward) {
      best_static = s;
      best_b = b;
    }
  }
  const TailStats ee = tail_of("eexapp");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool pass = ee.reward > rnd.reward && ee.reward > best_static.reward && ee.violation_ratio <= rnd.violation_ratio;
  return {pass, fmt("final-1k reward eexapp %.4f vs random %.4f, best static b=%d %.4f; violation eexapp %.4f vs "
                    "random %.4f; eexapp sleep %.4f; statics:%s; %.0f s",
                    ee.reward, rnd.reward, best_b, best_static.reward, ee.violation_ratio, rnd.violation_ratio,
                    ee.sleep_ratio, statics.c_str(), secs)};
}

// ---------------------------------------------------------------- 9

Outcome ablation_ordering() {
  ExperimentConfig cfg;
  cfg.seed = 21;
  cfg.traffic = TrafficLevel::kMedium;
  cfg.slice_count = 4;
  cfg.ues = 8;
  cfg.train.total_timesteps = 5000;
  const int seeds = 5;
  const std::int64_t window = 1000;
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::string> variants = {"eexapp", "wo_gat", "wo_trans", "wo_both"};
  const auto rows = run_ablate(cfg, variants, seeds, window, {}, false);
  auto rewards = [&](const std::string& v) {
    std::vector<double> r;
    for (const auto& row : rows)
      if (row.variant == v) r.push_back(row.tail.reward);
    return r;
  };
  const auto ee = rewards("eexapp");
  bool pass = true;
  std::string detail = fmt("medium 4-slice, %d paired seeds, %lld steps, final-%lld mean:", seeds,
                           static_cast<long long>(cfg.train.total_timesteps), static_cast<long long>(window));
  double m_ee = 0.0;
  for (double x : ee) m_ee += x / seeds;
  detail += fmt(" eexapp %.4f;", m_ee);
  for (const std::string v : {"wo_gat", "wo_trans", "wo_both"}) {
    const auto other = rewards(v);
    double mean = 0.0, m_v = 0.0;
    for (int s = 0; s < seeds; ++s) {
      mean += (ee[static_cast<std::size_t>(s)] - other[static_cast<std::size_t>(s)]) / seeds;
      m_v += other[static_cast<std::size_t>(s)] / seeds;
    }
    double var = 0.0;
    for (int s = 0; s < seeds; ++s) {
      const double d = ee[static_cast<std::size_t>(s)] - other[static_cast<std::size_t>(s)] - mean;
      var += d * d;
    }
    const double se = std::sqrt(var / (seeds - 1) / seeds);
    const bool ok = mean >= 0.0 && mean > se;
    pass = pass && ok;
    detail += fmt(" %s %.4f (diff %+.4f, se %.4f %s);", v.c_str(), m_v, mean, se, ok ? "ok" : "no");
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  detail += fmt(" %.0f s", secs);
  return {pass, detail};
}

// ---------------------------------------------------------------- 10

Outcome transport_transparency() {
  ExperimentConfig cfg;
  cfg.seed = 10;
  cfg.traffic = TrafficLevel::kLight;
  cfg.slice_count = 2;
  cfg.ues = 8;
  cfg.train.total_timesteps = 1000;
  const fs::path local = scratch("c10_local"), remote = scratch("c10_remote");
  run_train(cfg, local);

  e2::Listener listener(e2::parse_endpoint("127.0.0.1:0"));
  const int port = listener.port();
  auto du = std::async(std::launch::async, [&] {
    e2::LineSocket link = listener.accept();
    return run_du(cfg, link, 0, {}, nullptr);
  });
  e2::LineSocket link = e2::connect_to(e2::parse_endpoint("127.0.0.1:" + std::to_string(port)));
  run_ric_session(cfg, link, "", 0, remote, nullptr);
  link.close();
  const auto rep = du.get();

  const std::string a = slurp(local / "metrics.csv"), b = slurp(remote / "metrics.csv");
  const std::string ca = slurp(local / "checkpoints" / "final.ckpt"), cb = slurp(remote / "checkpoints" / "final.ckpt");
  const bool pass = !a.empty() && a == b && !ca.empty() && ca == cb && rep.steps >= 1000 && rep.late_steps == 0;
  return {pass, fmt("1k training steps over TCP: metrics.csv %s (%zu bytes), final checkpoint %s, DU %lld steps, %lld late",
                    a == b ? "byte-identical" : "DIFFERS", a.size(), ca == cb ? "identical" : "DIFFERS",
                    static_cast<long long>(rep.steps), static_cast<long long>(rep.late_steps))};
}

// ---------------------------------------------------------------- 11

int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(EEXAPP_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

Outcome determinism() {
  const std::string small =
      " --set slices=2 --set ues=8 --set agent.d=16 --set agent.heads=2 --set agent.ffn_hidden=32"
      " --set agent.hidden=32 --set train.horizon=64 --set eval.steps=100 --set eval.episodes=2";
  std::map<std::string, std::string> runs[2];
  int failures = 0;
  for (int k = 0; k < 2; ++k) {
    const fs::path root = scratch("c11_" + std::to_string(k));
    const fs::path log = root / "log.txt";
    auto go = [&](const std::string& args) { failures += cli(args, log) != 0; };
    go("train --set train.total_timesteps=500 --set train.checkpoint_every=2" + small + " --out " +
       (root / "train").string());
    go("eval --checkpoint " + (root / "train" / "checkpoints" / "final.ckpt").string() + small + " --out " +
       (root / "eval").string());
    go("ablate --variants 'eexapp,sasc,random' --seeds 2 --window 100 --set train.total_timesteps=300" + small +
       " --out " + (root / "ablate").string());
    go("scenario-grid --variants 'wo_both,static_fixed_sleep(5)' --set train.total_timesteps=100" + small + " --out " +
       (root / "grid").string());
    fs::remove(log);
    runs[k] = tree(root);
  }
  std::size_t differing = 0;
  for (const auto& [name, bytes] : runs[0]) {
    auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != bytes) ++differing;
  }
  const bool pass = failures == 0 && differing == 0 && runs[0].size() == runs[1].size() && runs[0].size() > 10;
  return {pass, fmt("train/eval/ablate/scenario-grid twice: %zu output files, %zu differ, %d failed commands",
                    runs[0].size(), differing, failures)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"numerical core", numerical_core},
      {"encoder set semantics", encoder_sets},
      {"GAT correctness", gat_correctness},
      {"GAE correctness", gae_correctness},
      {"PPO clip semantics", clip_semantics},
      {"reward identity", reward_identity},
      {"simulator conservation and isolation", simulator_conservation},
      {"learning signal", learning_signal},
      {"ablation ordering", ablation_ordering},
      {"transport transparency", transport_transparency},
      {"determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2d %s  %s: %s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(fs::temp_directory_path() / ("eexapp_acceptance_" + std::to_string(::getpid())));
  return failed == 0 ? 0 : 1;
}
