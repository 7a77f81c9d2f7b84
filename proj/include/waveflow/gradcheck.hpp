#pragma once

// Central finite-difference gradient verification. 64-bit only.

#include "waveflow/tensor.hpp"

#include <functional>
#include <vector>

namespace waveflow {

// f builds the scalar loss from the given inputs on the given tape.
// Returns max over all input coordinates of
//   |analytic - central| / max(|analytic|, |central|, 1e-8).
// denom_floor absorbs finite-difference roundoff on near-zero gradients;
// raise it when the loss is O(1) but individual gradients may vanish.
inline double grad_check(const std::function<Var<double>(Tape<double>&)>& f,
                         const std::vector<Var<double>>& inputs, double step = 1e-5,
                         double denom_floor = 1e-8) {
  Tape<double> tape;
  auto loss = f(tape);
  if (!loss->is_scalar()) throw ShapeError("grad_check: loss must be scalar");
  for (const auto& in : inputs) {
    in->grad.clear();
    in->ensure_grad();
  }
  tape.backward(loss);

  double max_err = 0.0;
  for (const auto& in : inputs) {
    for (long i = 0; i < in->size(); ++i) {
      double saved = in->value[i];
      in->value[i] = saved + step;
      Tape<double> tp;
      tp.recording = false;
      double lp = f(tp)->scalar();
      in->value[i] = saved - step;
      Tape<double> tm;
      tm.recording = false;
      double lm = f(tm)->scalar();
      in->value[i] = saved;
      double numeric = (lp - lm) / (2.0 * step);
      double analytic = in->grad[i];
      double denom = std::max({std::abs(analytic), std::abs(numeric), denom_floor});
      max_err = std::max(max_err, std::abs(analytic - numeric) / denom);
    }
  }
  return max_err;
}

}  // namespace waveflow
