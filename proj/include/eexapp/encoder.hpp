#pragma once

// Set encoder: maps a variable number K of per-UE feature rows to a single
// fixed-width state vector. Rows are projected to d, passed through post-norm
// self-attention blocks, and mean-pooled. Without positional encodings the
// result does not depend on UE order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eexapp/core_types.hpp"
#include "eexapp/nn/autodiff.hpp"
#include "eexapp/nn/layers.hpp"

namespace eexapp {

struct EncoderConfig {
  std::size_t f_in = kNumFeatures;
  std::size_t d = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_hidden = 128;

  void validate() const {
    if (f_in == 0 || d == 0) throw ConfigError("encoder: f_in and d must be positive");
    if (heads == 0 || d % heads != 0) throw ConfigError("encoder: d must be divisible by heads");
  }
};

enum class EncoderKind {
  kTransformer,  // projection + self-attention blocks + mean pool
  kMeanPoolMlp,  // mean pool of raw rows, then a 2-layer MLP to d
};

struct EncodedState {
  std::vector<double> vector;
  std::size_t k_seen = 0;
  bool empty = false;  // K was 0 and the learned empty-cell vector was used
};

/// Running per-feature mean/variance (Welford) kept as tensors so they can be
/// checkpointed with the model.
class FeatureNormalizer {
 public:
  static constexpr double kClip = 5.0;

  FeatureNormalizer()
      : mean_("obs_norm.mean", nn::Tensor(1, kNumFeatures)),
        m2_("obs_norm.m2", nn::Tensor(1, kNumFeatures)),
        count_("obs_norm.count", nn::Tensor(1, 1)) {}

  void update(const FeatureVector& x) {
    double& n = count_.value.data[0];
    n += 1.0;
    for (int i = 0; i < kNumFeatures; ++i) {
      const double delta = x[i] - mean_.value.data[i];
      mean_.value.data[i] += delta / n;
      m2_.value.data[i] += delta * (x[i] - mean_.value.data[i]);
    }
  }

  double count() const { return count_.value.data[0]; }
  double mean(int i) const { return mean_.value.data[i]; }
  /// Population variance; 1 until two samples have been seen.
  double variance(int i) const {
    const double n = count();
    if (n < 2.0) return 1.0;
    return std::max(0.0, m2_.value.data[i] / n);
  }

  double standardize(int i, double x) const {
    const double z = (x - mean(i)) / std::sqrt(variance(i) + 1e-8);
    return std::clamp(z, -kClip, kClip);
  }

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

/// Slice context appended to each standardized KPI row: slice one-hot and the
/// slice's (Q, D) targets divided by reference scales.
struct SliceContext {
  std::vector<QosTarget> slices;
  double q_ref_mbps = 10.0;
  double d_ref_ms = 100.0;

  std::size_t augmented_width() const { return kNumFeatures + slices.size() + 2; }
};

/// Standardized, clipped KPI vector plus slice augmentation. When `update` is
/// set the raw KPIs are folded into the running statistics first.
inline std::vector<double> normalize_features(const UeObservation& ue, FeatureNormalizer& stats,
                                              const SliceContext& ctx, bool update) {
  if (update) stats.update(ue.features);
  std::vector<double> out(ctx.augmented_width(), 0.0);
  for (int i = 0; i < kNumFeatures; ++i) out[static_cast<std::size_t>(i)] = stats.standardize(i, ue.features[i]);
  std::size_t slice_pos = ctx.slices.size();
  for (std::size_t s = 0; s < ctx.slices.size(); ++s)
    if (ctx.slices[s].slice_id == ue.slice_id) slice_pos = s;
  if (slice_pos == ctx.slices.size()) throw ConfigError("observation references unknown slice " + std::to_string(ue.slice_id));
  out[kNumFeatures + slice_pos] = 1.0;
  out[kNumFeatures + ctx.slices.size()] = ctx.slices[slice_pos].q_target_mbps / ctx.q_ref_mbps;
  out[kNumFeatures + ctx.slices.size() + 1] = ctx.slices[slice_pos].d_target_ms / ctx.d_ref_ms;
  return out;
}

/// K x f_in feature matrix for a whole observation.
inline nn::Tensor observation_features(const StateObservation& obs, FeatureNormalizer& stats, const SliceContext& ctx,
                                       bool update) {
  const std::size_t w = ctx.augmented_width();
  nn::Tensor t(obs.ues.size(), w);
  for (std::size_t k = 0; k < obs.ues.size(); ++k) {
    const auto row = normalize_features(obs.ues[k], stats, ctx, update);
    std::copy(row.begin(), row.end(), t.data.begin() + static_cast<std::ptrdiff_t>(k * w));
  }
  return t;
}

class StateEncoder {
 public:
  StateEncoder() = default;
  StateEncoder(const std::string& name, const EncoderConfig& cfg, EncoderKind kind, Engine& rng)
      : cfg_(cfg), kind_(kind), empty_state_(name + ".empty_state", nn::Tensor(1, cfg.d)) {
    cfg.validate();
    if (kind == EncoderKind::kTransformer) {
      proj_ = nn::Linear(name + ".proj", cfg.f_in, cfg.d, rng);
      for (std::size_t l = 0; l < cfg.layers; ++l)
        blocks_.emplace_back(name + ".block" + std::to_string(l), cfg.d, cfg.heads, cfg.ffn_hidden, rng);
    } else {
      pool_mlp_ = nn::Mlp(name + ".mlp", {cfg.f_in, cfg.d, cfg.d}, nn::Activation::kTanh, rng);
    }
  }

  const EncoderConfig& config() const { return cfg_; }
  EncoderKind kind() const { return kind_; }

  /// features: K x f_in constants -> 1 x d.
  nn::Var operator()(nn::Graph& g, const nn::Tensor& features) {
    if (features.rows() == 0) return g.param(empty_state_);
    if (features.cols() != cfg_.f_in)
      throw ArgumentError("encoder: expected " + std::to_string(cfg_.f_in) + " features per UE, got " +
                          std::to_string(features.cols()));
    return (*this)(g.constant(features));
  }

  /// Differentiable in the input rows; x must have K >= 1 rows.
  nn::Var operator()(nn::Var x) {
    if (kind_ == EncoderKind::kMeanPoolMlp) return pool_mlp_(nn::mean_rows(x));
    nn::Var h = proj_(x);
    for (auto& b : blocks_) h = b(h);
    return nn::mean_rows(h);
  }

  /// Per-UE contextual embeddings (K x d) before pooling; transformer only.
  nn::Var embeddings(nn::Var x) {
    nn::Var h = proj_(x);
    for (auto& b : blocks_) h = b(h);
    return h;
  }

  EncodedState encode(const nn::Tensor& features) {
    nn::Graph g;
    nn::Var s = (*this)(g, features);
    return EncodedState{s.value().data, features.rows(), features.rows() == 0};
  }

  void collect(nn::ParamList& out) {
    out.push_back(&empty_state_);
    if (kind_ == EncoderKind::kTransformer) {
      proj_.collect(out);
      for (auto& b : blocks_) b.collect(out);
    } else {
      pool_mlp_.collect(out);
    }
  }

  std::vector<nn::EncoderBlock>& blocks() { return blocks_; }

 private:
  EncoderConfig cfg_;
  EncoderKind kind_ = EncoderKind::kTransformer;
  nn::Linear proj_;
  std::vector<nn::EncoderBlock> blocks_;
  nn::Mlp pool_mlp_;
  nn::Parameter empty_state_;
};

}  // namespace eexapp
