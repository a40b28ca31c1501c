#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "eexapp/errors.hpp"
#include "eexapp/nn/autodiff.hpp"
#include "eexapp/rng.hpp"

namespace eexapp::nn {

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)

inline double logsumexp(std::span<const double> x) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : x) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

class Categorical {
 public:
  explicit Categorical(std::vector<double> logits) : logits_(std::move(logits)) {
    if (logits_.empty()) throw ArgumentError("Categorical: no classes");
    for (double v : logits_)
      if (!std::isfinite(v)) throw ArgumentError("Categorical: non-finite logit");
    lse_ = logsumexp(logits_);
  }

  std::size_t size() const { return logits_.size(); }

  double log_prob(int cls) const {
    if (cls < 0 || static_cast<std::size_t>(cls) >= logits_.size())
      throw ArgumentError("Categorical::log_prob: class " + std::to_string(cls) + " out of support");
    return logits_[static_cast<std::size_t>(cls)] - lse_;
  }

  double prob(int cls) const { return std::exp(log_prob(cls)); }

  /// Inverse-CDF draw; the last class absorbs rounding slack.
  int sample(Engine& rng) const {
    const double u = uniform01(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < logits_.size(); ++i) {
      acc += std::exp(logits_[i] - lse_);
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(logits_.size()) - 1;
  }

  int mode() const {
    return static_cast<int>(std::max_element(logits_.begin(), logits_.end()) - logits_.begin());
  }

  double entropy() const {
    double h = 0.0;
    for (double l : logits_) {
      const double lp = l - lse_;
      h -= std::exp(lp) * lp;
    }
    return h;
  }

 private:
  std::vector<double> logits_;
  double lse_ = 0.0;
};

/// Diagonal Gaussian with per-dimension mean and log standard deviation.
class DiagGaussian {
 public:
  DiagGaussian(std::vector<double> mean, std::vector<double> log_std) : mean_(std::move(mean)), log_std_(std::move(log_std)) {
    if (mean_.size() != log_std_.size()) throw ArgumentError("DiagGaussian: mean/log_std length mismatch");
    for (std::size_t i = 0; i < mean_.size(); ++i)
      if (!std::isfinite(mean_[i]) || !std::isfinite(log_std_[i])) throw ArgumentError("DiagGaussian: non-finite parameter");
  }

  std::size_t size() const { return mean_.size(); }

  double log_prob(std::span<const double> x) const {
    if (x.size() != mean_.size()) throw ArgumentError("DiagGaussian::log_prob: dimension mismatch");
    double lp = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double z = (x[i] - mean_[i]) / std::exp(log_std_[i]);
      lp += -0.5 * z * z - log_std_[i] - kHalfLog2Pi;
    }
    return lp;
  }

  std::vector<double> sample(Engine& rng) const {
    std::vector<double> x(mean_.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = mean_[i] + std::exp(log_std_[i]) * standard_normal(rng);
    return x;
  }

  const std::vector<double>& mode() const { return mean_; }

  double entropy() const {
    double h = 0.0;
    for (double ls : log_std_) h += ls + 0.5 + kHalfLog2Pi;
    return h;
  }

 private:
  std::vector<double> mean_;
  std::vector<double> log_std_;
};

// Graph versions used by the policy losses.

/// rows x n logits, one class per row -> rows x 1 log-probabilities.
inline Var categorical_log_prob(Var logits, std::span<const int> classes) {
  return gather_cols(log_softmax_rows(logits), classes);
}

inline Var categorical_entropy(Var logits) {
  Var lp = log_softmax_rows(logits);
  return neg(sum_cols(mul(exp(lp), lp)));
}

/// mean: rows x n, log_std: 1 x n (broadcast), x: rows x n constants.
inline Var gaussian_log_prob(Var mean, Var log_std, const Tensor& x) {
  Graph& g = *mean.g;
  Var z = div(sub(g.constant(x), mean), exp(log_std));
  Var per_dim = sub(scale(square(z), -0.5), log_std);
  return add_scalar(sum_cols(per_dim), -kHalfLog2Pi * static_cast<double>(x.cols()));
}

/// 1 x 1 entropy of a diagonal Gaussian with the given log_std (1 x n).
inline Var gaussian_entropy(Var log_std) {
  return add_scalar(sum(log_std), (0.5 + kHalfLog2Pi) * static_cast<double>(log_std.cols()));
}

}  // namespace eexapp::nn
