#pragma once

// Dual-actor / dual-critic heads on top of the set encoder, plus the
// two-node bipartite attention that fuses the raw critic values.
//
//   EE actor  : d -> 128 -> 128 -> n_classes    categorical over sleep actions
//   RS actor  : d -> 128 -> 128 -> I            Gaussian mean in logit space
//   critics   : d -> 128 -> 128 -> 1            one per reward component
//
// A single-actor/single-critic (SASC) mode shares one body between both
// action heads and learns one value of r_total.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "eexapp/core_types.hpp"
#include "eexapp/encoder.hpp"
#include "eexapp/nn/checkpoint.hpp"
#include "eexapp/nn/distributions.hpp"
#include "eexapp/nn/layers.hpp"

namespace eexapp {

struct PolicyOutput {
  int sleep_class = 0;
  double sleep_log_prob = 0.0;
  std::vector<double> beta_raw;
  SliceAllocation beta;
  double beta_log_prob = 0.0;
};

struct CriticPair {
  double v_alpha = 0.0;
  double v_beta = 0.0;
  double v_alpha_agg = 0.0;
  double v_beta_agg = 0.0;
  /// attention[i][j]: weight of source i (0=alpha, 1=beta) for target j.
  std::array<std::array<double, 2>, 2> attention{{{1.0, 0.0}, {0.0, 1.0}}};
  /// SASC only: the single value of r_total.
  double v_total = 0.0;
  bool single = false;
};

struct AgentConfig {
  EncoderConfig encoder;
  EncoderKind encoder_kind = EncoderKind::kTransformer;
  std::size_t hidden = 128;
  std::size_t n_classes = 0;
  std::size_t n_slices = 0;
  bool use_gat = true;
  bool sasc = false;
  bool shared_encoder = true;
  double log_std_init = -0.5;
  bool value_norm = true;
  std::string variant = "eexapp";
  int n_ts = 20;

  void validate() const {
    encoder.validate();
    if (n_classes == 0) throw ConfigError("agent: n_classes must be positive");
    if (n_slices == 0) throw ConfigError("agent: at least one slice required");
    if (hidden == 0) throw ConfigError("agent: hidden width must be positive");
  }

  std::string canonical() const {
    std::ostringstream s;
    s << "variant=" << variant << ";n_ts=" << n_ts << ";I=" << n_slices << ";d=" << encoder.d << ";f_in=" << encoder.f_in
      << ";layers=" << encoder.layers << ";heads=" << encoder.heads << ";ffn=" << encoder.ffn_hidden
      << ";encoder=" << (encoder_kind == EncoderKind::kTransformer ? "transformer" : "meanpool_mlp")
      << ";gat=" << use_gat << ";sasc=" << sasc << ";shared=" << shared_encoder << ";hidden=" << hidden
      << ";n_classes=" << n_classes << ";value_norm=" << value_norm;
    return s.str();
  }

  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : canonical()) {
      h ^= ch;
      h *= 1099511628211ULL;
    }
    return h;
  }
};

/// Scalar form of the critic fusion, shared by the rollout path.
struct GatWeights {
  double w_s = 1.0;
  double w_t = 1.0;
  double p0 = 0.0;
  double p1 = 0.0;
};

inline CriticPair aggregate_values(double v_alpha, double v_beta, const GatWeights& w) {
  auto lrelu = [](double x) { return x >= 0.0 ? x : 0.2 * x; };
  const std::array<double, 2> v = {v_alpha, v_beta};
  CriticPair out;
  out.v_alpha = v_alpha;
  out.v_beta = v_beta;
  std::array<double, 2> agg{};
  for (int j = 0; j < 2; ++j) {
    std::array<double, 2> e{};
    for (int i = 0; i < 2; ++i) e[i] = lrelu(w.p0 * w.w_s * v[i] + w.p1 * w.w_t * v[j]);
    const double m = std::max(e[0], e[1]);
    const double z0 = std::exp(e[0] - m), z1 = std::exp(e[1] - m);
    out.attention[0][j] = z0 / (z0 + z1);
    out.attention[1][j] = z1 / (z0 + z1);
    agg[j] = out.attention[0][j] * w.w_s * v[0] + out.attention[1][j] * w.w_s * v[1];
  }
  out.v_alpha_agg = agg[0];
  out.v_beta_agg = agg[1];
  return out;
}

class GatAggregator {
 public:
  GatAggregator()
      : w_s_("gat.w_s", nn::Tensor(1, 1, 1.0)), w_t_("gat.w_t", nn::Tensor(1, 1, 1.0)), p_("gat.p", nn::Tensor(1, 2)) {}

  GatWeights weights() const { return {w_s_.value.data[0], w_t_.value.data[0], p_.value.data[0], p_.value.data[1]}; }
  void set_weights(const GatWeights& w) {
    w_s_.value.data[0] = w.w_s;
    w_t_.value.data[0] = w.w_t;
    p_.value.data[0] = w.p0;
    p_.value.data[1] = w.p1;
  }

  /// v_alpha, v_beta: B x 1. Returns {V^_alpha, V^_beta}, each B x 1.
  std::array<nn::Var, 2> operator()(nn::Var v_alpha, nn::Var v_beta, std::array<nn::Var, 2>* gamma = nullptr) {
    nn::Graph& g = *v_alpha.g;
    nn::Var ws = g.param(w_s_), wt = g.param(w_t_), p = g.param(p_);
    nn::Var p0 = nn::slice_cols(p, 0, 1), p1 = nn::slice_cols(p, 1, 2);
    const std::array<nn::Var, 2> src = {nn::mul(v_alpha, ws), nn::mul(v_beta, ws)};
    const std::array<nn::Var, 2> query = {nn::mul(v_alpha, wt), nn::mul(v_beta, wt)};
    const std::array<nn::Var, 2> src_scored = {nn::mul(src[0], p0), nn::mul(src[1], p0)};
    nn::Var values = nn::concat_cols(src);
    std::array<nn::Var, 2> out;
    for (int j = 0; j < 2; ++j) {
      nn::Var q = nn::mul(query[j], p1);
      const std::array<nn::Var, 2> e = {nn::leaky_relu(nn::add(src_scored[0], q), 0.2),
                                        nn::leaky_relu(nn::add(src_scored[1], q), 0.2)};
      nn::Var att = nn::softmax_rows(nn::concat_cols(e));
      if (gamma) (*gamma)[j] = att;
      out[j] = nn::sum_cols(nn::mul(att, values));
    }
    return out;
  }

  void collect(nn::ParamList& out) {
    out.push_back(&w_s_);
    out.push_back(&w_t_);
    out.push_back(&p_);
  }

 private:
  nn::Parameter w_s_;
  nn::Parameter w_t_;
  nn::Parameter p_;
};

/// Graph outputs for a batch of B states.
struct HeadOutputs {
  nn::Var logits;    // B x n_classes
  nn::Var mean;      // B x I
  nn::Var log_std;   // 1 x I
  nn::Var v_alpha;   // B x 1 head output, standardized under value_norm (SASC: the single value)
  nn::Var v_beta;    // B x 1 (unused in SASC)
  nn::Var state;     // B x d actor-side encoded states
};

struct Decision {
  PolicyOutput policy;
  CriticPair critic;
  EncodedState state;
};

/// Running mean and variance of one critic's return targets. With value
/// normalization on, the critic head predicts standardized returns and
/// everything downstream (GAT, GAE) sees denormalized values.
class ValueNormalizer {
 public:
  explicit ValueNormalizer(const std::string& name = "value_norm")
      : mean_(name + ".mean", nn::Tensor(1, 1)), m2_(name + ".m2", nn::Tensor(1, 1)), count_(name + ".count", nn::Tensor(1, 1)) {}

  void update(std::span<const double> xs) {
    double& n = count_.value.data[0];
    double& mu = mean_.value.data[0];
    double& m2 = m2_.value.data[0];
    for (double x : xs) {
      n += 1.0;
      const double delta = x - mu;
      mu += delta / n;
      m2 += delta * (x - mu);
    }
  }

  double count() const { return count_.value.data[0]; }
  double mean() const { return mean_.value.data[0]; }
  /// 1 until two samples have been seen; floored so targets stay bounded.
  double stddev() const {
    if (count() < 2.0) return 1.0;
    return std::max(std::sqrt(std::max(0.0, m2_.value.data[0] / count())), 1e-3);
  }
  double denormalize(double z) const { return mean() + stddev() * z; }
  double normalize(double x) const { return (x - mean()) / stddev(); }

  void collect(nn::ParamList& out) {
    out.push_back(&mean_);
    out.push_back(&m2_);
    out.push_back(&count_);
  }

 private:
  nn::Parameter mean_;
  nn::Parameter m2_;
  nn::Parameter count_;
};

class Agent {
 public:
  Agent(const AgentConfig& cfg, SliceContext slices, std::uint64_t seed) : cfg_(cfg), slices_(std::move(slices)) {
    cfg_.validate();
    if (slices_.slices.size() != cfg_.n_slices) throw ConfigError("agent: slice table size != n_slices");
    if (slices_.augmented_width() != cfg_.encoder.f_in)
      throw ConfigError("agent: encoder f_in must be " + std::to_string(slices_.augmented_width()));
    Engine rng(stream_seed(seed, 77));
    const std::size_t d = cfg_.encoder.d, h = cfg_.hidden;
    actor_encoder_ = StateEncoder("encoder", cfg_.encoder, cfg_.encoder_kind, rng);
    if (!cfg_.shared_encoder) critic_encoder_ = StateEncoder("critic_encoder", cfg_.encoder, cfg_.encoder_kind, rng);
    log_std_ = nn::Parameter("rs_actor.log_std", nn::Tensor(1, cfg_.n_slices, cfg_.log_std_init));
    if (cfg_.sasc) {
      body_ = nn::Mlp("sasc.body", {d, h, h}, nn::Activation::kTanh, rng);
      logits_head_ = nn::Linear("sasc.logits", h, cfg_.n_classes, rng);
      mean_head_ = nn::Linear("sasc.mean", h, cfg_.n_slices, rng);
      critic_alpha_ = nn::Mlp("critic", {d, h, h, 1}, nn::Activation::kTanh, rng);
    } else {
      ee_actor_ = nn::Mlp("ee_actor", {d, h, h, cfg_.n_classes}, nn::Activation::kTanh, rng);
      rs_actor_ = nn::Mlp("rs_actor", {d, h, h, cfg_.n_slices}, nn::Activation::kTanh, rng);
      critic_alpha_ = nn::Mlp("critic_alpha", {d, h, h, 1}, nn::Activation::kTanh, rng);
      critic_beta_ = nn::Mlp("critic_beta", {d, h, h, 1}, nn::Activation::kTanh, rng);
    }
  }

  const AgentConfig& config() const { return cfg_; }
  const SliceContext& slice_context() const { return slices_; }
  FeatureNormalizer& normalizer() { return normalizer_; }
  GatAggregator& gat() { return gat_; }
  StateEncoder& encoder() { return actor_encoder_; }
  /// Stream 0 is alpha (or the single SASC critic), 1 is beta. Identity
  /// transforms when value normalization is off.
  ValueNormalizer& value_norm(int stream) { return stream == 0 ? vnorm_alpha_ : vnorm_beta_; }
  const ValueNormalizer& value_norm(int stream) const { return stream == 0 ? vnorm_alpha_ : vnorm_beta_; }
  double value_of(int stream, double head) const {
    return cfg_.value_norm ? value_norm(stream).denormalize(head) : head;
  }
  double head_target(int stream, double ret) const { return cfg_.value_norm ? value_norm(stream).normalize(ret) : ret; }
  nn::Var head_target(int stream, nn::Var ret) const {
    if (!cfg_.value_norm) return ret;
    const ValueNormalizer& vn = value_norm(stream);
    return nn::add_scalar(nn::scale(ret, 1.0 / vn.stddev()), -vn.mean() / vn.stddev());
  }
  /// Graph version of value_of.
  nn::Var value_of(int stream, nn::Var head) const {
    if (!cfg_.value_norm) return head;
    const ValueNormalizer& vn = value_norm(stream);
    return nn::add_scalar(nn::scale(head, vn.stddev()), vn.mean());
  }
  void update_value_norm(std::span<const double> ret_alpha, std::span<const double> ret_beta) {
    if (!cfg_.value_norm) return;
    vnorm_alpha_.update(ret_alpha);
    if (!cfg_.sasc) vnorm_beta_.update(ret_beta);
  }

  nn::Tensor features(const StateObservation& obs, bool update_stats) {
    return observation_features(obs, normalizer_, slices_, update_stats);
  }

  /// Runs every head on a batch of feature matrices (one per state).
  HeadOutputs forward(nn::Graph& g, std::span<const nn::Tensor* const> batch) {
    std::vector<nn::Var> actor_states, critic_states;
    actor_states.reserve(batch.size());
    for (const nn::Tensor* f : batch) actor_states.push_back(actor_encoder_(g, *f));
    nn::Var sa = actor_states.size() == 1 ? actor_states[0] : nn::concat_rows(actor_states);
    nn::Var sc = sa;
    if (!cfg_.shared_encoder) {
      for (const nn::Tensor* f : batch) critic_states.push_back(critic_encoder_(g, *f));
      sc = critic_states.size() == 1 ? critic_states[0] : nn::concat_rows(critic_states);
    }
    HeadOutputs out;
    out.state = sa;
    out.log_std = g.param(log_std_);
    if (cfg_.sasc) {
      nn::Var hdn = nn::tanh(body_(sa));
      out.logits = logits_head_(hdn);
      out.mean = mean_head_(hdn);
      out.v_alpha = critic_alpha_(sc);
      out.v_beta = out.v_alpha;
    } else {
      out.logits = ee_actor_(sa);
      out.mean = rs_actor_(sa);
      out.v_alpha = critic_alpha_(sc);
      out.v_beta = critic_beta_(sc);
    }
    return out;
  }

  /// Aggregated values for a batch; identity when the GAT is disabled.
  std::array<nn::Var, 2> aggregate(nn::Var v_alpha, nn::Var v_beta) {
    if (!cfg_.use_gat || cfg_.sasc) return {v_alpha, v_beta};
    return gat_(v_alpha, v_beta);
  }

  Decision step(const nn::Tensor& features, Engine& rng, bool deterministic) {
    nn::Graph g;
    const nn::Tensor* one = &features;
    HeadOutputs h = forward(g, std::span<const nn::Tensor* const>(&one, 1));
    Decision d;
    d.state.vector = h.state.value().data;
    d.state.k_seen = features.rows();
    d.state.empty = features.rows() == 0;

    nn::Categorical cat(h.logits.value().data);
    nn::DiagGaussian gauss(h.mean.value().data, h.log_std.value().data);
    d.policy.sleep_class = deterministic ? cat.mode() : cat.sample(rng);
    d.policy.sleep_log_prob = cat.log_prob(d.policy.sleep_class);
    d.policy.beta_raw = deterministic ? gauss.mode() : gauss.sample(rng);
    d.policy.beta_log_prob = gauss.log_prob(d.policy.beta_raw);
    d.policy.beta = softmax_allocation(d.policy.beta_raw);

    const double va = value_of(0, h.v_alpha.value().item());
    if (cfg_.sasc) {
      d.critic.single = true;
      d.critic.v_total = va;
      d.critic.v_alpha = d.critic.v_alpha_agg = va;
      d.critic.v_beta = d.critic.v_beta_agg = va;
    } else if (cfg_.use_gat) {
      d.critic = aggregate_values(va, value_of(1, h.v_beta.value().item()), gat_.weights());
    } else {
      d.critic.v_alpha = d.critic.v_alpha_agg = va;
      d.critic.v_beta = d.critic.v_beta_agg = value_of(1, h.v_beta.value().item());
    }
    return d;
  }

  /// Critic values only, e.g. for bootstrapping at a rollout boundary.
  CriticPair evaluate(const nn::Tensor& features) {
    Engine unused(0);
    return step(features, unused, true).critic;
  }

  static SliceAllocation softmax_allocation(std::span<const double> raw) {
    const double lse = nn::logsumexp(raw);
    SliceAllocation a;
    a.beta.resize(raw.size());
    double s = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) s += (a.beta[i] = std::exp(raw[i] - lse));
    for (double& b : a.beta) b /= s;
    return a;
  }

  /// Parameters updated with the actor learning rate. With a shared encoder the
  /// encoder lives here.
  nn::ParamList actor_params() {
    nn::ParamList out;
    actor_encoder_.collect(out);
    out.push_back(&log_std_);
    if (cfg_.sasc) {
      body_.collect(out);
      logits_head_.collect(out);
      mean_head_.collect(out);
    } else {
      ee_actor_.collect(out);
      rs_actor_.collect(out);
    }
    return out;
  }

  nn::ParamList critic_params() {
    nn::ParamList out;
    if (!cfg_.shared_encoder) critic_encoder_.collect(out);
    critic_alpha_.collect(out);
    if (!cfg_.sasc) critic_beta_.collect(out);
    return out;
  }

  nn::ParamList gat_params() {
    nn::ParamList out;
    if (cfg_.use_gat && !cfg_.sasc) gat_.collect(out);
    return out;
  }

  nn::ParamList trainable_params() {
    nn::ParamList out = actor_params();
    for (auto* p : critic_params()) out.push_back(p);
    for (auto* p : gat_params()) out.push_back(p);
    return out;
  }

  /// Everything that goes into a checkpoint, normalizer statistics included.
  nn::ParamList state_params() {
    nn::ParamList out = trainable_params();
    normalizer_.collect(out);
    vnorm_alpha_.collect(out);
    vnorm_beta_.collect(out);
    return out;
  }

  void save(const std::string& path) {
    nn::save_checkpoint_file(path, state_params());
    std::ofstream meta(path + ".meta");
    if (!meta) throw std::runtime_error("cannot write " + path + ".meta");
    meta << metadata();
  }

  /// Refuses checkpoints whose sidecar does not match this agent's shape.
  void load(const std::string& path) {
    std::ifstream meta(path + ".meta");
    if (!meta) throw ConfigError("checkpoint metadata " + path + ".meta not found");
    std::stringstream ss;
    ss << meta.rdbuf();
    const auto kv = parse_metadata(ss.str());
    const auto it = kv.find("config_hash");
    if (it == kv.end() || it->second != hash_hex())
      throw ConfigError("checkpoint " + path + " was trained for a different configuration (config hash " +
                        (it == kv.end() ? std::string("missing") : it->second) + " vs " + hash_hex() + ")");
    nn::load_checkpoint_file(path, state_params());
  }

  std::string hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(cfg_.hash()));
    return buf;
  }

  std::string metadata() const {
    std::ostringstream s;
    s << "n_classes=" << cfg_.n_classes << "\nI=" << cfg_.n_slices << "\nd=" << cfg_.encoder.d << "\nvariant=" << cfg_.variant
      << "\nconfig_hash=" << hash_hex() << "\nconfig=" << cfg_.canonical() << "\n";
    return s.str();
  }

  static std::map<std::string, std::string> parse_metadata(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
  }

 private:
  AgentConfig cfg_;
  SliceContext slices_;
  FeatureNormalizer normalizer_;
  ValueNormalizer vnorm_alpha_{"value_norm.alpha"};
  ValueNormalizer vnorm_beta_{"value_norm.beta"};
  StateEncoder actor_encoder_;
  StateEncoder critic_encoder_;
  nn::Parameter log_std_;
  nn::Mlp ee_actor_, rs_actor_, critic_alpha_, critic_beta_;
  nn::Mlp body_;
  nn::Linear logits_head_, mean_head_;
  GatAggregator gat_;
};

}  // namespace eexapp
