#pragma once

// Central finite-difference gradient checks for every autodiff operator and
// for the model composites. Each case builds a fresh scalar loss from
// parameters initialised from a seed and reports the worst relative error
// between backward() and (f(x+h) - f(x-h)) / 2h.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "eexapp/agent.hpp"
#include "eexapp/nn/distributions.hpp"

namespace gradcheck {

using namespace eexapp;
using nn::Graph;
using nn::Parameter;
using nn::Tensor;
using nn::Var;

inline constexpr double kStep = 1e-5;
inline constexpr double kFloor = 1e-4;  // denominator floor for near-zero gradients
inline constexpr double kTolerance = 1e-4;

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kFloor});
}

inline Tensor random_tensor(Engine& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (double& v : t.data) v = uniform(rng, lo, hi);
  return t;
}

/// Weighted sum with fixed random weights so every output entry matters.
inline Var project(Var y, Engine& rng) {
  return nn::sum(nn::mul(y, y.g->constant(random_tensor(rng, y.rows(), y.cols()))));
}

using LossFn = std::function<Var(Graph&)>;

/// Checks up to `per_param` randomly chosen entries of each parameter (all
/// entries when per_param == 0).
inline double check(const nn::ParamList& params, const LossFn& loss, Engine& pick, std::size_t per_param = 0) {
  for (auto* p : params) p->zero_grad();
  {
    Graph g;
    g.backward(loss(g));
  }
  auto eval = [&] {
    Graph g;
    return loss(g).value().item();
  };
  double worst = 0.0;
  for (auto* p : params) {
    std::vector<std::size_t> idx(p->value.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (per_param && idx.size() > per_param) {
      for (std::size_t k = 0; k < per_param; ++k) std::swap(idx[k], idx[k + uniform_index(pick, idx.size() - k)]);
      idx.resize(per_param);
    }
    for (std::size_t i : idx) {
      const double x0 = p->value.data[i];
      p->value.data[i] = x0 + kStep;
      const double fp = eval();
      p->value.data[i] = x0 - kStep;
      const double fm = eval();
      p->value.data[i] = x0;
      worst = std::max(worst, rel_error(p->grad.data[i], (fp - fm) / (2.0 * kStep)));
    }
  }
  return worst;
}

struct Case {
  std::string name;
  std::function<double(std::uint64_t seed)> run;  // returns worst relative error
};

namespace detail {

// Fixed random weighting of every output entry; the weights depend only on
// the seed and the output shape, so each re-evaluation sees the same ones.
inline Var weighted(Var y, std::uint64_t seed) {
  Engine wr(seed ^ 0x5eedULL);
  return nn::sum(nn::mul(y, y.g->constant(random_tensor(wr, y.rows(), y.cols()))));
}

// Unary op on a random r x c parameter.
inline Case unary(std::string name, std::function<Var(Var)> op, double lo = -2.0, double hi = 2.0) {
  return {name, [op, lo, hi](std::uint64_t seed) {
            Engine rng(seed);
            const std::size_t r = 1 + uniform_index(rng, 4), c = 1 + uniform_index(rng, 5);
            Parameter x("x", random_tensor(rng, r, c, lo, hi));
            return check({&x}, [&](Graph& g) { return weighted(op(g.param(x)), seed); }, rng);
          }};
}

// Binary op; `broadcast` makes b a 1 x c row.
inline Case binary(std::string name, std::function<Var(Var, Var)> op, bool broadcast, double blo = -2.0,
                   double bhi = 2.0) {
  return {name, [op, broadcast, blo, bhi](std::uint64_t seed) {
            Engine rng(seed);
            const std::size_t r = 1 + uniform_index(rng, 4), c = 1 + uniform_index(rng, 5);
            Parameter a("a", random_tensor(rng, r, c));
            Parameter b("b", random_tensor(rng, broadcast ? 1 : r, c, blo, bhi));
            const Tensor w = random_tensor(rng, r, c);
            return check({&a, &b}, [&](Graph& g) { return nn::sum(nn::mul(op(g.param(a), g.param(b)), g.constant(w))); },
                         rng);
          }};
}

inline double sign_away(Engine& rng, double lo, double hi) {
  const double v = uniform(rng, lo, hi);
  return uniform01(rng) < 0.5 ? -v : v;
}

}  // namespace detail

/// One case per differentiable operator.
inline std::vector<Case> operator_cases() {
  using namespace detail;
  std::vector<Case> cs;
  cs.push_back(binary("add", [](Var a, Var b) { return nn::add(a, b); }, false));
  cs.push_back(binary("add_broadcast", [](Var a, Var b) { return nn::add(a, b); }, true));
  cs.push_back(binary("sub", [](Var a, Var b) { return nn::sub(a, b); }, false));
  cs.push_back(binary("sub_broadcast", [](Var a, Var b) { return nn::sub(a, b); }, true));
  cs.push_back(binary("mul", [](Var a, Var b) { return nn::mul(a, b); }, false));
  cs.push_back(binary("mul_broadcast", [](Var a, Var b) { return nn::mul(a, b); }, true));
  cs.push_back(binary("div", [](Var a, Var b) { return nn::div(a, b); }, false, 0.5, 2.0));
  cs.push_back(binary("div_broadcast", [](Var a, Var b) { return nn::div(a, b); }, true, 0.5, 2.0));
  cs.push_back(unary("scale", [](Var a) { return nn::scale(a, -1.7); }));
  cs.push_back(unary("add_scalar", [](Var a) { return nn::add_scalar(a, 0.3); }));
  cs.push_back(unary("neg", [](Var a) { return nn::neg(a); }));
  cs.push_back(unary("tanh", [](Var a) { return nn::tanh(a); }));
  cs.push_back(unary("exp", [](Var a) { return nn::exp(a); }));
  cs.push_back(unary("log", [](Var a) { return nn::log(a); }, 0.2, 3.0));
  cs.push_back(unary("square", [](Var a) { return nn::square(a); }));
  cs.push_back(unary("transpose", [](Var a) { return nn::transpose(a); }));
  cs.push_back(unary("mean_rows", [](Var a) { return nn::mean_rows(a); }));
  cs.push_back(unary("sum_cols", [](Var a) { return nn::sum_cols(a); }));
  cs.push_back(unary("softmax_rows", [](Var a) { return nn::softmax_rows(a); }));
  cs.push_back(unary("log_softmax_rows", [](Var a) { return nn::log_softmax_rows(a); }));
  cs.push_back(unary("sum", [](Var a) { return nn::scale(nn::sum(a), 0.7); }));
  cs.push_back(unary("mean", [](Var a) { return nn::scale(nn::mean(a), 0.7); }));
  cs.push_back(unary("categorical_entropy", [](Var a) { return nn::categorical_entropy(a); }));
  cs.push_back(unary("gaussian_entropy", [](Var a) { return nn::gaussian_entropy(nn::mean_rows(a)); }));

  // Piecewise ops: keep inputs away from the kinks by more than the step.
  auto kinked = [](std::string name, std::function<Var(Var)> op, double kink) {
    return Case{name, [op, kink](std::uint64_t seed) {
                  Engine rng(seed);
                  const std::size_t r = 1 + uniform_index(rng, 4), c = 1 + uniform_index(rng, 5);
                  Parameter x("x", Tensor(r, c));
                  for (double& v : x.value.data) v = (uniform01(rng) < 0.5 ? -kink : kink) + detail::sign_away(rng, 0.01, 1.5);
                  const Tensor w = random_tensor(rng, r, c);
                  return check({&x}, [&](Graph& g) { return nn::sum(nn::mul(op(g.param(x)), g.constant(w))); }, rng);
                }};
  };
  cs.push_back(kinked("relu", [](Var a) { return nn::relu(a); }, 0.0));
  cs.push_back(kinked("leaky_relu", [](Var a) { return nn::leaky_relu(a, 0.2); }, 0.0));
  cs.push_back(kinked("huber", [](Var a) { return nn::huber(a, 1.0); }, 1.0));

  cs.push_back({"matmul", [](std::uint64_t seed) {
                  Engine rng(seed);
                  const std::size_t n = 1 + uniform_index(rng, 4), k = 1 + uniform_index(rng, 5), m = 1 + uniform_index(rng, 4);
                  Parameter a("a", random_tensor(rng, n, k)), b("b", random_tensor(rng, k, m));
                  const Tensor w = random_tensor(rng, n, m);
                  return check({&a, &b}, [&](Graph& g) { return nn::sum(nn::mul(nn::matmul(g.param(a), g.param(b)), g.constant(w))); }, rng);
                }});
  cs.push_back({"slice_cols", [](std::uint64_t seed) {
                  Engine rng(seed);
                  const std::size_t r = 1 + uniform_index(rng, 3), c = 2 + uniform_index(rng, 5);
                  const std::size_t c0 = uniform_index(rng, c - 1), c1 = c0 + 1 + uniform_index(rng, c - c0 - 1);
                  Parameter a("a", random_tensor(rng, r, c));
                  const Tensor w = random_tensor(rng, r, c1 - c0);
                  return check({&a}, [&](Graph& g) { return nn::sum(nn::mul(nn::slice_cols(g.param(a), c0, c1), g.constant(w))); }, rng);
                }});
  cs.push_back({"concat_cols", [](std::uint64_t seed) {
                  Engine rng(seed);
                  const std::size_t r = 1 + uniform_index(rng, 3);
                  Parameter a("a", random_tensor(rng, r, 2)), b("b", random_tensor(rng, r, 3));
                  const Tensor w = random_tensor(rng, r, 7);
                  return check({&a, &b}, [&](Graph& g) {
                    const std::vector<Var> parts = {g.param(a), g.param(b), nn::square(g.param(a))};
                    return nn::sum(nn::mul(nn::concat_cols(parts), g.constant(w)));
                  }, rng);
                }});
  cs.push_back({"concat_rows", [](std::uint64_t seed) {
                  Engine rng(seed);
                  const std::size_t c = 1 + uniform_index(rng, 4);
                  Parameter a("a", random_tensor(rng, 2, c)), b("b", random_tensor(rng, 1, c));
                  const Tensor w = random_tensor(rng, 5, c);
                  return check({&a, &b}, [&](Graph& g) {
                    const std::vector<Var> parts = {g.param(a), g.param(b), nn::tanh(g.param(a))};
                    return nn::sum(nn::mul(nn::concat_rows(parts), g.constant(w)));
                  }, rng);
                }});
  cs.push_back({"gather_cols", [](std::uint64_t seed) {
                  Engine rng(seed);
                  const std::size_t r = 1 + uniform_index(rng, 5), c = 2 + uniform_index(rng, 5);
                  Parameter a("a", random_tensor(rng, r, c));
                  std::vector<int> idx(r);
                  for (int& i : idx) i = static_cast<int>(uniform_index(rng, c));
                  const Tensor w = random_tensor(rng, r, 1);
                  return check({&a}, [&](Graph& g) { return nn::sum(nn::mul(nn::gather_cols(g.param(a), idx), g.constant(w))); }, rng);
                }});
  cs.push_back({"layer_norm_rows", [](std::uint64_t seed) {
                  Engine rng(seed);
                  const std::size_t r = 1 + uniform_index(rng, 4), c = 2 + uniform_index(rng, 6);
                  Parameter x("x", random_tensor(rng, r, c, -2.0, 2.0));
                  Parameter gain("gain", random_tensor(rng, 1, c, 0.5, 1.5)), bias("bias", random_tensor(rng, 1, c));
                  const Tensor w = random_tensor(rng, r, c);
                  return check({&x, &gain, &bias}, [&](Graph& g) {
                    return nn::sum(nn::mul(nn::layer_norm_rows(g.param(x), g.param(gain), g.param(bias)), g.constant(w)));
                  }, rng);
                }});
  cs.push_back({"clipped_surrogate", [](std::uint64_t seed) {
                  Engine rng(seed);
                  const std::size_t n = 1 + uniform_index(rng, 6);
                  Parameter lp("logp", random_tensor(rng, n, 1, -3.0, 0.0));
                  std::vector<double> old(n), adv(n);
                  for (std::size_t i = 0; i < n; ++i) {
                    // Ratio either well inside or well outside [0.8, 1.2].
                    const double lr = uniform01(rng) < 0.5 ? uniform(rng, -0.15, 0.15) : detail::sign_away(rng, 0.3, 0.8);
                    old[i] = lp.value.data[i] - lr;
                    adv[i] = detail::sign_away(rng, 0.1, 2.0);
                  }
                  return check({&lp}, [&](Graph& g) { return nn::sum(nn::clipped_surrogate(g.param(lp), old, adv, 0.2)); }, rng);
                }});
  cs.push_back({"categorical_log_prob", [](std::uint64_t seed) {
                  Engine rng(seed);
                  const std::size_t r = 1 + uniform_index(rng, 4), c = 2 + uniform_index(rng, 8);
                  Parameter a("logits", random_tensor(rng, r, c, -3.0, 3.0));
                  std::vector<int> cls(r);
                  for (int& i : cls) i = static_cast<int>(uniform_index(rng, c));
                  return check({&a}, [&](Graph& g) { return nn::sum(nn::categorical_log_prob(g.param(a), cls)); }, rng);
                }});
  cs.push_back({"gaussian_log_prob", [](std::uint64_t seed) {
                  Engine rng(seed);
                  const std::size_t r = 1 + uniform_index(rng, 4), c = 1 + uniform_index(rng, 4);
                  Parameter m("mean", random_tensor(rng, r, c)), ls("log_std", random_tensor(rng, 1, c, -1.0, 0.5));
                  const Tensor x = random_tensor(rng, r, c, -2.0, 2.0);
                  return check({&m, &ls}, [&](Graph& g) { return nn::sum(nn::gaussian_log_prob(g.param(m), g.param(ls), x)); }, rng);
                }});
  cs.push_back({"stop_gradient", [](std::uint64_t seed) {
                  // d/da [a * sg(a)] = sg(a): the blocked path contributes nothing.
                  Engine rng(seed);
                  const std::size_t r = 1 + uniform_index(rng, 3), c = 1 + uniform_index(rng, 3);
                  Parameter a("a", random_tensor(rng, r, c));
                  a.zero_grad();
                  Graph g;
                  Var va = g.param(a);
                  g.backward(nn::sum(nn::mul(va, nn::stop_gradient(va))));
                  double worst = 0.0;
                  for (std::size_t i = 0; i < a.value.size(); ++i) worst = std::max(worst, rel_error(a.grad.data[i], a.value.data[i]));
                  return worst;
                }});
  return cs;
}

/// Reduced-width configuration for composite checks; a full-width encoder
/// case is included separately.
inline EncoderConfig small_encoder(std::size_t f_in) {
  EncoderConfig c;
  c.f_in = f_in;
  c.d = 8;
  c.layers = 2;
  c.heads = 2;
  c.ffn_hidden = 12;
  return c;
}

inline Tensor random_features(Engine& rng, std::size_t k, std::size_t f) { return random_tensor(rng, k, f, -2.0, 2.0); }

inline std::vector<Case> composite_cases() {
  std::vector<Case> cs;
  cs.push_back({"encoder_block", [](std::uint64_t seed) {
                  Engine rng(seed);
                  nn::EncoderBlock blk("blk", 8, 2, 12, rng);
                  const std::size_t k = 1 + uniform_index(rng, 5);
                  Parameter x("x", random_tensor(rng, k, 8));
                  nn::ParamList ps = {&x};
                  blk.collect(ps);
                  Engine wr(seed + 1);
                  const Tensor w = random_tensor(wr, k, 8);
                  return check(ps, [&](Graph& g) { return nn::sum(nn::mul(blk(g.param(x)), g.constant(w))); }, rng, 4);
                }});
  for (EncoderKind kind : {EncoderKind::kTransformer, EncoderKind::kMeanPoolMlp}) {
    cs.push_back({kind == EncoderKind::kTransformer ? "state_encoder" : "meanpool_encoder", [kind](std::uint64_t seed) {
                    Engine rng(seed);
                    StateEncoder enc("enc", small_encoder(6), kind, rng);
                    const Tensor f = random_features(rng, 1 + uniform_index(rng, 6), 6);
                    nn::ParamList ps;
                    enc.collect(ps);
                    Engine wr(seed + 1);
                    const Tensor w = random_tensor(wr, 1, 8);
                    return check(ps, [&](Graph& g) { return nn::sum(nn::mul(enc(g, f), g.constant(w))); }, rng, 4);
                  }});
  }
  cs.push_back({"state_encoder_d64", [](std::uint64_t seed) {
                  Engine rng(seed);
                  EncoderConfig c;
                  c.f_in = 21;
                  StateEncoder enc("enc", c, EncoderKind::kTransformer, rng);
                  const Tensor f = random_features(rng, 1 + uniform_index(rng, 4), 21);
                  nn::ParamList ps;
                  enc.collect(ps);
                  Engine wr(seed + 1);
                  const Tensor w = random_tensor(wr, 1, 64);
                  return check(ps, [&](Graph& g) { return nn::sum(nn::mul(enc(g, f), g.constant(w))); }, rng, 1);
                }});

  // Heads on top of a small agent: EE actor log-prob, RS actor log-prob,
  // both critics.
  auto agent_case = [](std::string name, bool sasc, int which) {
    return Case{name, [sasc, which](std::uint64_t seed) {
                  Engine rng(seed);
                  const std::vector<QosTarget> sl = {{0, 1.0, 10.0}, {1, 2.0, 20.0}};
                  AgentConfig cfg;
                  cfg.encoder = small_encoder(kNumFeatures + 4);
                  cfg.hidden = 10;
                  cfg.n_classes = 7;
                  cfg.n_slices = 2;
                  cfg.sasc = sasc;
                  cfg.use_gat = !sasc;
                  cfg.log_std_init = uniform(rng, -1.0, 0.0);
                  Agent agent(cfg, SliceContext{sl, 10.0, 100.0}, seed);
                  const std::size_t b = 1 + uniform_index(rng, 3);
                  std::vector<Tensor> feats;
                  for (std::size_t i = 0; i < b; ++i) feats.push_back(random_features(rng, 1 + uniform_index(rng, 4), cfg.encoder.f_in));
                  std::vector<const Tensor*> ptrs;
                  for (auto& f : feats) ptrs.push_back(&f);
                  std::vector<int> cls(b);
                  for (int& c : cls) c = static_cast<int>(uniform_index(rng, cfg.n_classes));
                  const Tensor raw = random_tensor(rng, b, 2, -1.5, 1.5);
                  Engine wr(seed + 1);
                  const Tensor w = random_tensor(wr, b, 1);
                  nn::ParamList ps = agent.actor_params();
                  for (auto* p : agent.critic_params()) ps.push_back(p);
                  return check(ps, [&](Graph& g) {
                    HeadOutputs h = agent.forward(g, ptrs);
                    Var out;
                    switch (which) {
                      case 0: out = nn::categorical_log_prob(h.logits, cls); break;
                      case 1: out = nn::gaussian_log_prob(h.mean, h.log_std, raw); break;
                      case 2: out = h.v_alpha; break;
                      default: out = h.v_beta; break;
                    }
                    return nn::sum(nn::mul(out, g.constant(w)));
                  }, rng, 3);
                }};
  };
  cs.push_back(agent_case("ee_actor_head", false, 0));
  cs.push_back(agent_case("rs_actor_head", false, 1));
  cs.push_back(agent_case("critic_alpha_head", false, 2));
  cs.push_back(agent_case("critic_beta_head", false, 3));
  cs.push_back(agent_case("sasc_joint_head", true, 0));

  cs.push_back({"gat_aggregation", [](std::uint64_t seed) {
                  Engine rng(seed);
                  GatAggregator gat;
                  GatWeights wts;
                  wts.w_s = uniform(rng, -2.0, 2.0);
                  wts.w_t = uniform(rng, -2.0, 2.0);
                  wts.p0 = uniform(rng, -2.0, 2.0);
                  wts.p1 = uniform(rng, -2.0, 2.0);
                  gat.set_weights(wts);
                  const std::size_t b = 1 + uniform_index(rng, 4);
                  Parameter va("va", random_tensor(rng, b, 1, -3.0, 3.0)), vb("vb", random_tensor(rng, b, 1, -3.0, 3.0));
                  Engine wr(seed + 1);
                  const Tensor w0 = random_tensor(wr, b, 1), w1 = random_tensor(wr, b, 1);
                  nn::ParamList ps = {&va, &vb};
                  gat.collect(ps);
                  return check(ps, [&](Graph& g) {
                    auto out = gat(g.param(va), g.param(vb));
                    return nn::add(nn::sum(nn::mul(out[0], g.constant(w0))), nn::sum(nn::mul(out[1], g.constant(w1))));
                  }, rng);
                }});
  return cs;
}

}  // namespace gradcheck
