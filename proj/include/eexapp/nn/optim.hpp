#pragma once

#include <cmath>
#include <span>

#include "eexapp/nn/autodiff.hpp"

namespace eexapp::nn {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam step on every parameter, then zero the gradients.
inline void adam_step(std::span<Parameter* const> params, const AdamConfig& cfg) {
  for (Parameter* p : params) {
    ++p->adam_t;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->adam_t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->adam_t));
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad.data[i];
      double& m = p->adam_m.data[i];
      double& v = p->adam_v.data[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      p->value.data[i] -= cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
    }
    p->zero_grad();
  }
}

/// Plain gradient descent, then zero the gradients.
inline void sgd_step(std::span<Parameter* const> params, double lr) {
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value.data[i] -= lr * p->grad.data[i];
    p->zero_grad();
  }
}

inline void zero_grad(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

/// Rescales gradients so their global L2 norm is at most max_norm; returns
/// the norm before clipping.
inline double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params)
    for (double g : p->grad.data) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (Parameter* p : params)
      for (double& g : p->grad.data) g *= s;
  }
  return norm;
}

inline bool all_finite(std::span<Parameter* const> params) {
  for (const Parameter* p : params)
    if (!p->value.all_finite()) return false;
  return true;
}

}  // namespace eexapp::nn
