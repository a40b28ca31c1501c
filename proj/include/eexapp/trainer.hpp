#pragma once

// Rollout collection, GAE on the fused critic values, and clipped-surrogate
// PPO updates for both actor streams.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "eexapp/agent.hpp"
#include "eexapp/environment.hpp"
#include "eexapp/nn/optim.hpp"

namespace eexapp {

enum class Optimizer { kAdam, kSgd };

struct TrainConfig {
  double gamma = 0.99;
  double lam = 0.95;
  double clip_eps = 0.2;
  double huber_zeta = 1.0;
  double lr_actor = 3e-4;
  double lr_critic = 3e-4;
  std::size_t horizon = 128;
  std::size_t epochs = 4;
  std::size_t minibatch = 32;
  std::int64_t total_timesteps = 20000;
  bool normalize_advantages = true;
  double entropy_coef = 0.0;
  double max_grad_norm = 0.5;
  Optimizer optimizer = Optimizer::kAdam;
  /// 0 = continuing task; otherwise the env is reset every episode_steps.
  std::int64_t episode_steps = 0;

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("train.gamma must lie in [0,1]");
    if (!(lam >= 0.0 && lam <= 1.0)) throw ConfigError("train.lambda must lie in [0,1]");
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("train.clip_eps must lie in (0,1)");
    if (!(huber_zeta > 0.0)) throw ConfigError("train.huber_zeta must be > 0");
    if (!(lr_actor >= 0.0 && lr_critic >= 0.0)) throw ConfigError("learning rates must be >= 0");
    if (horizon == 0 || epochs == 0 || minibatch == 0) throw ConfigError("horizon, epochs and minibatch must be >= 1");
    if (total_timesteps < 0 || episode_steps < 0) throw ConfigError("timestep counts must be >= 0");
    if (entropy_coef < 0.0 || max_grad_norm < 0.0) throw ConfigError("entropy_coef and max_grad_norm must be >= 0");
  }
};

struct Transition {
  nn::Tensor features;
  int sleep_class = 0;
  std::vector<double> beta_raw;
  double logp_alpha = 0.0;
  double logp_beta = 0.0;
  double r_alpha = 0.0;
  double r_beta = 0.0;
  CriticPair values;
  bool done = false;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// A_t = delta_t + gamma*lambda*(1-done_t)*A_{t+1},
/// delta_t = r_t + gamma*(1-done_t)*V_{t+1} - V_t, V_T = last_value.
inline GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const bool> dones,
                             double last_value, double gamma, double lam) {
  const std::size_t n = rewards.size();
  if (n == 0) throw ArgumentError("compute_gae: empty trajectory");
  if (values.size() != n || dones.size() != n) throw ArgumentError("compute_gae: length mismatch");
  GaeResult out{std::vector<double>(n), std::vector<double>(n)};
  double next_adv = 0.0;
  double next_value = last_value;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * live * next_value - values[k];
    next_adv = delta + gamma * lam * live * next_adv;
    out.advantages[k] = next_adv;
    out.returns[k] = values[k] + next_adv;
    next_value = values[k];
  }
  return out;
}

inline void normalize_in_place(std::vector<double>& x) {
  if (x.size() < 2) return;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(x.size()));
  for (double& v : x) v = (v - mean) / (sd + 1e-8);
}

struct UpdateReport {
  double actor_loss_alpha = 0.0;
  double actor_loss_beta = 0.0;
  double critic_loss_alpha = 0.0;
  double critic_loss_beta = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;
};

/// Per-stream advantages/targets fed to one update. SASC uses stream alpha
/// for r_total and ignores beta.
///
/// With the GAT on, the critic targets are kept as functions of the fused
/// values so the critic losses can train the aggregator:
///   R_j = ret_map * fused_j + ret_const_j,
/// where fused_j is the GAT applied to the raw critic values (raw_alpha,
/// raw_beta; n+1 rows, the last one is the bootstrap state).
struct UpdateTargets {
  std::vector<double> adv_alpha, adv_beta;
  std::vector<double> ret_alpha, ret_beta;
  nn::Tensor ret_map;
  std::vector<double> ret_const_alpha, ret_const_beta;
  nn::Tensor raw_alpha, raw_beta;
};

/// GAE returns are linear in the value estimates:
///   R_t = r_t + gamma*(1-done_t)*((1-lambda)*V_{t+1} + lambda*R_{t+1}),  R_n = V_n.
/// Returns the n x (n+1) coefficient matrix and the reward-only part.
inline std::pair<nn::Tensor, std::vector<double>> gae_return_map(std::span<const double> rewards,
                                                                  std::span<const bool> dones, double gamma, double lam) {
  const std::size_t n = rewards.size();
  if (dones.size() != n) throw ArgumentError("gae_return_map: length mismatch");
  nn::Tensor c(n, n + 1);
  std::vector<double> k(n);
  std::vector<double> next_row(n + 1, 0.0);
  next_row[n] = 1.0;
  double next_const = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double live = dones[t] ? 0.0 : 1.0;
    std::vector<double> row(n + 1, 0.0);
    for (std::size_t j = 0; j <= n; ++j) row[j] = gamma * live * lam * next_row[j];
    row[t + 1] += gamma * live * (1.0 - lam);
    k[t] = rewards[t] + gamma * live * lam * next_const;
    std::copy(row.begin(), row.end(), c.data.begin() + static_cast<std::ptrdiff_t>(t * (n + 1)));
    next_row = std::move(row);
    next_const = k[t];
  }
  return {std::move(c), std::move(k)};
}

namespace detail {

inline nn::Tensor head_targets(const Agent& agent, int stream, const nn::Tensor& returns) {
  nn::Tensor out = returns;
  for (double& x : out.data) x = agent.head_target(stream, x);
  return out;
}

struct ParamSnapshot {
  std::vector<nn::Tensor> value, m, v;
  std::vector<std::int64_t> t;

  explicit ParamSnapshot(const nn::ParamList& ps) {
    for (const auto* p : ps) {
      value.push_back(p->value);
      m.push_back(p->adam_m);
      v.push_back(p->adam_v);
      t.push_back(p->adam_t);
    }
  }

  void restore(const nn::ParamList& ps) const {
    for (std::size_t i = 0; i < ps.size(); ++i) {
      ps[i]->value = value[i];
      ps[i]->adam_m = m[i];
      ps[i]->adam_v = v[i];
      ps[i]->adam_t = t[i];
      ps[i]->zero_grad();
    }
  }
};

inline void apply_step(const nn::ParamList& ps, double lr, Optimizer opt) {
  if (opt == Optimizer::kSgd) {
    nn::sgd_step(ps, lr);
  } else {
    nn::AdamConfig c;
    c.lr = lr;
    nn::adam_step(ps, c);
  }
}

}  // namespace detail

/// Runs `epochs` passes of shuffled minibatches over the batch. On a
/// non-finite loss or gradient the parameters are restored and the
/// NumericalError propagates.
inline UpdateReport ppo_update(Agent& agent, std::span<const Transition> batch, const UpdateTargets& tg,
                               const TrainConfig& cfg, Engine& rng) {
  const std::size_t n = batch.size();
  if (n == 0) throw ArgumentError("ppo_update: empty batch");
  const bool sasc = agent.config().sasc;
  const bool gat = agent.config().use_gat && !sasc;
  if (gat && (tg.ret_map.rows() != n || tg.raw_alpha.rows() != n + 1))
    throw ArgumentError("ppo_update: GAT targets need the return map from build_targets");
  nn::ParamList actor = agent.actor_params();
  nn::ParamList critic = agent.critic_params();
  for (auto* p : agent.gat_params()) critic.push_back(p);
  nn::ParamList all = actor;
  all.insert(all.end(), critic.begin(), critic.end());
  const detail::ParamSnapshot snap(all);

  UpdateReport rep;
  std::size_t n_mb = 0, n_samples = 0, n_clipped = 0;
  std::vector<std::size_t> idx(n);
  try {
    nn::zero_grad(all);
    for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
      std::iota(idx.begin(), idx.end(), 0);
      for (std::size_t k = n; k > 1; --k) std::swap(idx[k - 1], idx[uniform_index(rng, k)]);
      for (std::size_t start = 0; start < n; start += cfg.minibatch) {
        const std::size_t stop = std::min(n, start + cfg.minibatch);
        const std::size_t b = stop - start;
        std::vector<const nn::Tensor*> feats(b);
        std::vector<int> classes(b);
        nn::Tensor raw(b, batch[0].beta_raw.size());
        std::vector<double> old_a(b), old_b(b), old_sum(b), adv_a(b), adv_b(b);
        nn::Tensor ret_a(b, 1), ret_b(b, 1);
        for (std::size_t r = 0; r < b; ++r) {
          const std::size_t i = idx[start + r];
          const Transition& tr = batch[i];
          feats[r] = &tr.features;
          classes[r] = tr.sleep_class;
          std::copy(tr.beta_raw.begin(), tr.beta_raw.end(), raw.data.begin() + static_cast<std::ptrdiff_t>(r * raw.cols()));
          old_a[r] = tr.logp_alpha;
          old_b[r] = tr.logp_beta;
          old_sum[r] = tr.logp_alpha + tr.logp_beta;
          adv_a[r] = tg.adv_alpha[i];
          adv_b[r] = sasc ? 0.0 : tg.adv_beta[i];
          ret_a.data[r] = tg.ret_alpha[i];
          ret_b.data[r] = sasc ? 0.0 : tg.ret_beta[i];
        }

        nn::Graph g;
        HeadOutputs h = agent.forward(g, feats);
        nn::Var lp_a = nn::categorical_log_prob(h.logits, classes);
        nn::Var lp_b = nn::gaussian_log_prob(h.mean, h.log_std, raw);
        nn::Var loss_a, loss_b;
        if (sasc) {
          loss_a = nn::neg(nn::mean(nn::clipped_surrogate(nn::add(lp_a, lp_b), old_sum, adv_a, cfg.clip_eps)));
        } else {
          loss_a = nn::neg(nn::mean(nn::clipped_surrogate(lp_a, old_a, adv_a, cfg.clip_eps)));
          loss_b = nn::neg(nn::mean(nn::clipped_surrogate(lp_b, old_b, adv_b, cfg.clip_eps)));
        }
        nn::Var total = sasc ? loss_a : nn::add(loss_a, loss_b);
        if (cfg.entropy_coef > 0.0) {
          nn::Var ent = nn::add(nn::mean(nn::categorical_entropy(h.logits)), nn::gaussian_entropy(h.log_std));
          total = nn::sub(total, nn::scale(ent, cfg.entropy_coef));
        }
        nn::Var lc_a, lc_b;
        if (gat) {
          // Targets stay differentiable in the GAT parameters only: the raw
          // critic values feeding it are constants.
          auto fused = agent.gat()(g.constant(tg.raw_alpha), g.constant(tg.raw_beta));
          nn::Tensor map(b, n + 1), ka(b, 1), kb(b, 1);
          for (std::size_t r = 0; r < b; ++r) {
            const std::size_t i = idx[start + r];
            std::copy_n(tg.ret_map.data.begin() + static_cast<std::ptrdiff_t>(i * (n + 1)), n + 1,
                        map.data.begin() + static_cast<std::ptrdiff_t>(r * (n + 1)));
            ka.data[r] = tg.ret_const_alpha[i];
            kb.data[r] = tg.ret_const_beta[i];
          }
          nn::Var m = g.constant(map);
          nn::Var rt_a = agent.head_target(0, nn::add(nn::matmul(m, fused[0]), g.constant(ka)));
          nn::Var rt_b = agent.head_target(1, nn::add(nn::matmul(m, fused[1]), g.constant(kb)));
          lc_a = nn::mean(nn::huber(nn::sub(h.v_alpha, rt_a), cfg.huber_zeta));
          lc_b = nn::mean(nn::huber(nn::sub(h.v_beta, rt_b), cfg.huber_zeta));
        } else {
          lc_a = nn::mean(nn::huber(nn::sub(h.v_alpha, g.constant(detail::head_targets(agent, 0, ret_a))), cfg.huber_zeta));
          if (!sasc)
            lc_b = nn::mean(nn::huber(nn::sub(h.v_beta, g.constant(detail::head_targets(agent, 1, ret_b))), cfg.huber_zeta));
        }
        total = nn::add(total, lc_a);
        if (!sasc) total = nn::add(total, lc_b);
        g.backward(total);
        rep.grad_norm += nn::clip_grad_norm(all, cfg.max_grad_norm);
        detail::apply_step(actor, cfg.lr_actor, cfg.optimizer);
        detail::apply_step(critic, cfg.lr_critic, cfg.optimizer);

        rep.actor_loss_alpha += loss_a.value().item();
        if (!sasc) rep.actor_loss_beta += loss_b.value().item();
        rep.critic_loss_alpha += lc_a.value().item();
        if (!sasc) rep.critic_loss_beta += lc_b.value().item();
        for (std::size_t r = 0; r < b; ++r) {
          const double na = lp_a.value().data[r], nb = lp_b.value().data[r];
          const std::array<double, 2> diffs = {na - old_a[r], nb - old_b[r]};
          for (double d : sasc ? std::vector<double>{diffs[0] + diffs[1]} : std::vector<double>{diffs[0], diffs[1]}) {
            rep.approx_kl += -d;
            n_clipped += std::abs(std::exp(d) - 1.0) > cfg.clip_eps;
            ++n_samples;
          }
        }
        ++n_mb;
      }
    }
    if (!nn::all_finite(all)) throw NumericalError("parameters became non-finite during update");
  } catch (const NumericalError&) {
    snap.restore(all);
    throw;
  }
  const double inv = 1.0 / static_cast<double>(n_mb);
  rep.actor_loss_alpha *= inv;
  rep.actor_loss_beta *= inv;
  rep.critic_loss_alpha *= inv;
  rep.critic_loss_beta *= inv;
  rep.grad_norm *= inv;
  rep.clip_fraction = static_cast<double>(n_clipped) / static_cast<double>(n_samples);
  rep.approx_kl /= static_cast<double>(n_samples);
  return rep;
}

/// Advantages and targets for a finished rollout. Streams use the fused
/// values when the GAT is on, the raw ones otherwise; SASC uses r_total.
inline UpdateTargets build_targets(const Agent& agent, std::span<const Transition> buf, const CriticPair& bootstrap,
                                   const TrainConfig& cfg) {
  const std::size_t n = buf.size();
  std::vector<double> ra(n), rb(n), va(n), vb(n);
  std::unique_ptr<bool[]> dones(new bool[n]);
  for (std::size_t t = 0; t < n; ++t) {
    const Transition& tr = buf[t];
    dones[t] = tr.done;
    if (agent.config().sasc) {
      ra[t] = tr.r_alpha + tr.r_beta;
      va[t] = tr.values.v_total;
    } else {
      ra[t] = tr.r_alpha;
      rb[t] = tr.r_beta;
      va[t] = tr.values.v_alpha_agg;
      vb[t] = tr.values.v_beta_agg;
    }
  }
  const std::span<const bool> ds(dones.get(), n);
  UpdateTargets tg;
  if (agent.config().sasc) {
    auto g = compute_gae(ra, va, ds, bootstrap.v_total, cfg.gamma, cfg.lam);
    tg.adv_alpha = std::move(g.advantages);
    tg.ret_alpha = std::move(g.returns);
  } else {
    auto ga = compute_gae(ra, va, ds, bootstrap.v_alpha_agg, cfg.gamma, cfg.lam);
    auto gb = compute_gae(rb, vb, ds, bootstrap.v_beta_agg, cfg.gamma, cfg.lam);
    tg.adv_alpha = std::move(ga.advantages);
    tg.ret_alpha = std::move(ga.returns);
    tg.adv_beta = std::move(gb.advantages);
    tg.ret_beta = std::move(gb.returns);
    if (agent.config().use_gat) {
      auto [map, ka] = gae_return_map(ra, ds, cfg.gamma, cfg.lam);
      auto kb = gae_return_map(rb, ds, cfg.gamma, cfg.lam).second;
      tg.ret_map = std::move(map);
      tg.ret_const_alpha = std::move(ka);
      tg.ret_const_beta = std::move(kb);
      tg.raw_alpha = nn::Tensor(n + 1, 1);
      tg.raw_beta = nn::Tensor(n + 1, 1);
      for (std::size_t t = 0; t < n; ++t) {
        tg.raw_alpha.data[t] = buf[t].values.v_alpha;
        tg.raw_beta.data[t] = buf[t].values.v_beta;
      }
      tg.raw_alpha.data[n] = bootstrap.v_alpha;
      tg.raw_beta.data[n] = bootstrap.v_beta;
    }
  }
  if (cfg.normalize_advantages) {
    normalize_in_place(tg.adv_alpha);
    normalize_in_place(tg.adv_beta);
  }
  return tg;
}

struct StepRecord {
  std::int64_t t = 0;
  double r_total = 0.0;
  double r_alpha = 0.0;
  double r_beta = 0.0;
  double sleep_ratio = 0.0;
  double violation_ratio = 0.0;
  std::optional<UpdateReport> update;
};

/// Writes the per-timestep metrics CSV. Comment lines come first.
class MetricsWriter {
 public:
  explicit MetricsWriter(std::ostream& os) : os_(os) {}

  void comment(const std::string& text) {
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto nl = text.find('\n', start);
      const std::string line = text.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
      if (!line.empty()) os_ << "# " << line << '\n';
      if (nl == std::string::npos) break;
      start = nl + 1;
    }
  }

  void header() {
    os_ << "t,r_total,r_alpha,r_beta,sleep_ratio,violation_ratio,actor_loss_alpha,actor_loss_beta,"
           "critic_loss_alpha,critic_loss_beta,clip_fraction,approx_kl\n";
  }

  void append(const StepRecord& r) {
    os_ << r.t;
    put(r.r_total);
    put(r.r_alpha);
    put(r.r_beta);
    put(r.sleep_ratio);
    put(r.violation_ratio);
    if (r.update) {
      const UpdateReport& u = *r.update;
      for (double v : {u.actor_loss_alpha, u.actor_loss_beta, u.critic_loss_alpha, u.critic_loss_beta,
                       u.clip_fraction, u.approx_kl})
        put(v);
    } else {
      os_ << ",,,,,,";
    }
    os_ << '\n';
  }

 private:
  void put(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), ",%.9g", v);
    os_ << buf;
  }

  std::ostream& os_;
};

struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(std::int64_t update_index, Agent&)> on_update;
};

/// Seed of the episode-th reset (episode 0 uses the scenario seed).
inline std::uint64_t episode_seed(std::uint64_t seed, std::int64_t episode) {
  return episode == 0 ? seed : stream_seed(seed, 100 + static_cast<std::uint64_t>(episode));
}

inline std::vector<StepRecord> train(Environment& env, Agent& agent, const TrainConfig& cfg, std::uint64_t seed,
                                     const TrainHooks& hooks = {}) {
  cfg.validate();
  const auto actions = enumerate_sleep_actions(env.scenario().frame);
  if (actions.size() != agent.config().n_classes) throw ConfigError("agent n_classes does not match the frame config");
  Engine act_rng(stream_seed(seed, 11));
  Engine shuffle_rng(stream_seed(seed, 12));

  std::vector<StepRecord> records;
  records.reserve(static_cast<std::size_t>(cfg.total_timesteps));
  std::vector<Transition> buf;
  if (cfg.total_timesteps == 0) return records;
  buf.reserve(cfg.horizon);
  std::int64_t episode = 0, ep_t = 0, updates = 0;
  StateObservation obs = env.reset(episode_seed(env.scenario().seed, episode));
  nn::Tensor feats = agent.features(obs, true);

  for (std::int64_t t = 0; t < cfg.total_timesteps; ++t) {
    Decision d = agent.step(feats, act_rng, false);
    EnvStep es = env.step(actions[static_cast<std::size_t>(d.policy.sleep_class)], d.policy.beta);

    Transition tr;
    tr.features = std::move(feats);
    tr.sleep_class = d.policy.sleep_class;
    tr.beta_raw = d.policy.beta_raw;
    tr.logp_alpha = d.policy.sleep_log_prob;
    tr.logp_beta = d.policy.beta_log_prob;
    tr.r_alpha = es.reward.r_alpha;
    tr.r_beta = es.reward.r_beta;
    tr.values = d.critic;
    ++ep_t;
    tr.done = cfg.episode_steps > 0 && ep_t == cfg.episode_steps;
    buf.push_back(std::move(tr));

    StepRecord rec{t, es.reward.r_total, es.reward.r_alpha, es.reward.r_beta, es.sleep_ratio, es.violation_ratio, {}};

    if (buf.back().done) {
      ++episode;
      ep_t = 0;
      obs = env.reset(episode_seed(env.scenario().seed, episode));
    } else {
      obs = std::move(es.obs);
    }
    feats = agent.features(obs, true);

    if (buf.size() == cfg.horizon) {
      const CriticPair boot = agent.evaluate(feats);
      const UpdateTargets tg = build_targets(agent, buf, boot, cfg);
      agent.update_value_norm(tg.ret_alpha, tg.ret_beta);
      rec.update = ppo_update(agent, buf, tg, cfg, shuffle_rng);
      buf.clear();
      ++updates;
      if (hooks.on_update) hooks.on_update(updates, agent);
    }
    if (hooks.on_step) hooks.on_step(rec);
    records.push_back(std::move(rec));
  }
  return records;
}

// Controllers map observations to executable actions; they are how the
// non-learning baselines and the trained agent are evaluated alike.

struct Action {
  SleepAction sleep;
  SliceAllocation alloc;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual Action decide(const StateObservation& obs, Engine& rng) = 0;
};

class AgentController : public Controller {
 public:
  AgentController(Agent& agent, const FrameConfig& frame, bool deterministic)
      : agent_(agent), actions_(enumerate_sleep_actions(frame)), deterministic_(deterministic) {}

  Action decide(const StateObservation& obs, Engine& rng) override {
    const Decision d = agent_.step(agent_.features(obs, false), rng, deterministic_);
    return {actions_[static_cast<std::size_t>(d.policy.sleep_class)], d.policy.beta};
  }

 private:
  Agent& agent_;
  std::vector<SleepAction> actions_;
  bool deterministic_;
};

struct EvalSummary {
  double mean_reward = 0.0;
  double mean_sleep_ratio = 0.0;
  double violation_ratio = 0.0;
  std::int64_t steps = 0;
  std::vector<SliceTally> per_slice;
};

/// Rolls `episodes` episodes of `steps` each; episode e is reset with
/// stream_seed(seed, 200 + e).
inline EvalSummary evaluate(Environment& env, Controller& ctl, int episodes, std::int64_t steps, std::uint64_t seed) {
  if (episodes <= 0 || steps <= 0) throw ArgumentError("evaluate: episodes and steps must be positive");
  EvalSummary s;
  Engine rng(stream_seed(seed, 13));
  std::int64_t pairs = 0, bad = 0;
  for (const auto& q : env.scenario().slices) s.per_slice.push_back(SliceTally{q.slice_id, 0, 0, 0.0, 0.0});
  for (int e = 0; e < episodes; ++e) {
    StateObservation obs = env.reset(stream_seed(seed, 200 + static_cast<std::uint64_t>(e)));
    for (std::int64_t t = 0; t < steps; ++t) {
      const Action a = ctl.decide(obs, rng);
      EnvStep es = env.step(a.sleep, a.alloc);
      s.mean_reward += es.reward.r_total;
      s.mean_sleep_ratio += es.sleep_ratio;
      for (std::size_t i = 0; i < es.per_slice.size(); ++i) {
        SliceTally& tot = s.per_slice[i];
        tot.pairs += es.per_slice[i].pairs;
        tot.violations += es.per_slice[i].violations;
        tot.sum_q_mbps += es.per_slice[i].sum_q_mbps;
        tot.sum_d_ms += es.per_slice[i].sum_d_ms;
        pairs += es.per_slice[i].pairs;
        bad += es.per_slice[i].violations;
      }
      ++s.steps;
      obs = std::move(es.obs);
    }
  }
  s.mean_reward /= static_cast<double>(s.steps);
  s.mean_sleep_ratio /= static_cast<double>(s.steps);
  s.violation_ratio = pairs ? static_cast<double>(bad) / static_cast<double>(pairs) : 0.0;
  return s;
}

}  // namespace eexapp
