#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "eexapp/nn/autodiff.hpp"
#include "eexapp/rng.hpp"

namespace eexapp::nn {

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Engine& rng) {
  Tensor w(fan_in, fan_out);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : w.data) v = uniform(rng, -limit, limit);
  return w;
}

using ParamList = std::vector<Parameter*>;

/// y = x W + b, x is rows x in.
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Engine& rng)
      : weight_(name + ".weight", glorot_uniform(in, out, rng)), bias_(name + ".bias", Tensor(1, out)) {}

  Var operator()(Var x) {
    Graph& g = *x.g;
    return add(matmul(x, g.param(weight_)), g.param(bias_));
  }

  void collect(ParamList& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  std::size_t in_features() const { return weight_.value.rows(); }
  std::size_t out_features() const { return weight_.value.cols(); }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter weight_;
  Parameter bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim)
      : gain_(name + ".gain", Tensor(1, dim, 1.0)), bias_(name + ".bias", Tensor(1, dim)) {}

  Var operator()(Var x) { return layer_norm_rows(x, x.g->param(gain_), x.g->param(bias_)); }

  void collect(ParamList& out) {
    out.push_back(&gain_);
    out.push_back(&bias_);
  }

 private:
  Parameter gain_;
  Parameter bias_;
};

enum class Activation { kTanh, kRelu, kLeakyRelu };

inline Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::kTanh: return tanh(x);
    case Activation::kRelu: return relu(x);
    case Activation::kLeakyRelu: return leaky_relu(x, 0.2);
  }
  return x;
}

/// Fully connected stack; the activation follows every layer but the last.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, const std::vector<std::size_t>& sizes, Activation act, Engine& rng) : act_(act) {
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
      layers_.emplace_back(name + "." + std::to_string(i), sizes[i], sizes[i + 1], rng);
  }

  Var operator()(Var x) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      x = layers_[i](x);
      if (i + 1 < layers_.size()) x = activate(x, act_);
    }
    return x;
  }

  void collect(ParamList& out) {
    for (auto& l : layers_) l.collect(out);
  }

  std::vector<Linear>& layers() { return layers_; }

 private:
  std::vector<Linear> layers_;
  Activation act_ = Activation::kTanh;
};

/// Scaled dot-product self-attention over the rows of x (K x d) with `heads`
/// heads of width d / heads and an output projection. No positional
/// information and no masking, so the map is permutation-equivariant in rows.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, std::size_t d, std::size_t heads, Engine& rng)
      : d_(d), heads_(heads) {
    if (heads == 0 || d % heads != 0) throw ArgumentError("MultiHeadAttention: d must be divisible by heads");
    q_ = Linear(name + ".q", d, d, rng);
    k_ = Linear(name + ".k", d, d, rng);
    v_ = Linear(name + ".v", d, d, rng);
    o_ = Linear(name + ".o", d, d, rng);
  }

  Var operator()(Var x, std::vector<Var>* weights = nullptr) {
    if (x.rows() == 0) throw ArgumentError("MultiHeadAttention: K must be >= 1");
    if (x.cols() != d_) throw ArgumentError("MultiHeadAttention: input width != d");
    const std::size_t dh = d_ / heads_;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    Var q = q_(x), k = k_(x), v = v_(x);
    std::vector<Var> outs;
    outs.reserve(heads_);
    for (std::size_t h = 0; h < heads_; ++h) {
      Var qh = slice_cols(q, h * dh, (h + 1) * dh);
      Var kh = slice_cols(k, h * dh, (h + 1) * dh);
      Var vh = slice_cols(v, h * dh, (h + 1) * dh);
      Var attn = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
      if (weights) weights->push_back(attn);
      outs.push_back(matmul(attn, vh));
    }
    return o_(heads_ == 1 ? outs[0] : concat_cols(outs));
  }

  void collect(ParamList& out) {
    q_.collect(out);
    k_.collect(out);
    v_.collect(out);
    o_.collect(out);
  }

  std::size_t heads() const { return heads_; }

 private:
  std::size_t d_ = 0;
  std::size_t heads_ = 1;
  Linear q_, k_, v_, o_;
};

/// Post-norm encoder block: x = LN(x + MHA(x)); x = LN(x + FFN(x)).
class EncoderBlock {
 public:
  EncoderBlock() = default;
  EncoderBlock(const std::string& name, std::size_t d, std::size_t heads, std::size_t ffn_hidden, Engine& rng)
      : attn_(name + ".attn", d, heads, rng),
        norm1_(name + ".norm1", d),
        ffn_(name + ".ffn", {d, ffn_hidden, d}, Activation::kRelu, rng),
        norm2_(name + ".norm2", d) {}

  Var operator()(Var x) {
    x = norm1_(add(x, attn_(x)));
    return norm2_(add(x, ffn_(x)));
  }

  void collect(ParamList& out) {
    attn_.collect(out);
    norm1_.collect(out);
    ffn_.collect(out);
    norm2_.collect(out);
  }

  MultiHeadAttention& attention() { return attn_; }

 private:
  MultiHeadAttention attn_;
  LayerNorm norm1_;
  Mlp ffn_;
  LayerNorm norm2_;
};

}  // namespace eexapp::nn
