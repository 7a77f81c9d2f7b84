#pragma once

// Adam with bias correction. Updates are elementwise per parameter, so the
// result does not depend on registration order.

#include "waveflow/params.hpp"
#include "waveflow/tensor.hpp"

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace waveflow {

template <class S>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-3;
  long t = 0;
  std::map<std::string, std::vector<S>> m;
  std::map<std::string, std::vector<S>> v;
};

// Global L2-norm gradient clipping; no-op when max_norm <= 0.
template <class S>
inline double clip_grad_norm(ParamRegistry<S>& params, double max_norm) {
  double sq = 0.0;
  for (auto& [name, p] : params.ordered())
    for (S g : p->grad) sq += static_cast<double>(g) * static_cast<double>(g);
  double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    S s = static_cast<S>(max_norm / norm);
    for (auto& [name, p] : params.ordered())
      for (S& g : p->grad) g *= s;
  }
  return norm;
}

// lr_override < 0 means use state.learning_rate.
template <class S>
inline void adam_step(ParamRegistry<S>& params, AdamState<S>& state, double lr_override = -1.0) {
  double lr = lr_override >= 0 ? lr_override : state.learning_rate;
  state.t += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (auto& [name, p] : params.ordered()) {
    p->ensure_grad();
    check_finite("adam_step(grad)", p->grad);
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != p->value.size()) m.assign(p->value.size(), S(0));
    if (v.size() != p->value.size()) v.assign(p->value.size(), S(0));
    for (long i = 0; i < p->size(); ++i) {
      double g = p->grad[i];
      m[i] = static_cast<S>(state.beta1 * m[i] + (1.0 - state.beta1) * g);
      v[i] = static_cast<S>(state.beta2 * v[i] + (1.0 - state.beta2) * g * g);
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p->value[i] -= static_cast<S>(lr * mhat / (std::sqrt(vhat) + state.epsilon));
    }
  }
}

// Inverse-sqrt decay after a warm-hold period.
inline double adam_lr_schedule(double base_lr, long step, long hold_steps = 10000) {
  if (step <= hold_steps) return base_lr;
  return base_lr * std::sqrt(static_cast<double>(hold_steps) / static_cast<double>(step));
}

}  // namespace waveflow
