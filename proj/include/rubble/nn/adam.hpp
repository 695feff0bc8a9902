#pragma once

#include <cmath>
#include <cstdint>

#include "rubble/nn/model.hpp"

namespace rubble::nn {

struct AdamParams {
  double learning_rate = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  Weights<T> m;
  Weights<T> v;

  static AdamState zeros_like(const Weights<T>& w) {
    AdamState s;
    for (const auto& l : w.layers) {
      s.m.layers.emplace_back(l.size(), T{0});
      s.v.layers.emplace_back(l.size(), T{0});
    }
    return s;
  }
};

/// One bias-corrected Adam update at step `t` (1-based).
template <typename T>
void adam_step(Weights<T>& weights, const Weights<T>& grads, AdamState<T>& state, std::int64_t t,
               const AdamParams& p = {}) {
  if (t < 1) throw std::invalid_argument("adam_step: t must be >= 1");
  const auto same_shape = [&](const Weights<T>& other) {
    if (other.layers.size() != weights.layers.size()) return false;
    for (std::size_t i = 0; i < weights.layers.size(); ++i) {
      if (other.layers[i].size() != weights.layers[i].size()) return false;
    }
    return true;
  };
  if (!same_shape(grads) || !same_shape(state.m) || !same_shape(state.v)) {
    throw ShapeError("adam_step: gradient/state shapes differ from weights");
  }
  const double bc1 = 1.0 - std::pow(p.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(p.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < weights.layers.size(); ++i) {
    auto& w = weights.layers[i];
    auto& m = state.m.layers[i];
    auto& v = state.v.layers[i];
    const auto& g = grads.layers[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = static_cast<double>(g[k]);
      const double mk = p.beta1 * static_cast<double>(m[k]) + (1.0 - p.beta1) * gk;
      const double vk = p.beta2 * static_cast<double>(v[k]) + (1.0 - p.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double m_hat = mk / bc1;
      const double v_hat = vk / bc2;
      w[k] = static_cast<T>(static_cast<double>(w[k]) - p.learning_rate * m_hat / (std::sqrt(v_hat) + p.epsilon));
    }
  }
}

}  // namespace rubble::nn
