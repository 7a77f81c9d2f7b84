#pragma once

// Layer wrappers over the tensor primitives. Each holds named parameters in a
// ParamRegistry so checkpointing sees everything.

#include "waveflow/params.hpp"
#include "waveflow/tensor.hpp"

#include <string>

namespace waveflow {

template <class S>
struct Dense {
  Var<S> w;  // [in, out]
  Var<S> b;  // [out]

  Dense() = default;
  Dense(ParamRegistry<S>& reg, const std::string& name, int in, int out, Rng& rng,
        bool zero_init = false) {
    w = zero_init ? reg.zeros(name + ".w", {in, out}) : reg.glorot(name + ".w", {in, out}, in, out, rng);
    b = reg.zeros(name + ".b", {out});
  }

  Var<S> operator()(Tape<S>& tape, const Var<S>& x) const {
    return add_rowvec(tape, matmul(tape, x, w), b);
  }
};

template <class S>
struct Conv1dLayer {
  Var<S> kernel;  // [w, cin, cout]
  Var<S> bias;    // [cout]
  int dilation = 1;
  ConvPad pad = ConvPad::Same;

  Conv1dLayer() = default;
  Conv1dLayer(ParamRegistry<S>& reg, const std::string& name, int width, int cin, int cout,
              Rng& rng, int dilation_ = 1, bool zero_init = false) {
    int fan_in = width * cin;
    kernel = zero_init ? reg.zeros(name + ".kernel", {width, cin, cout})
                       : reg.glorot(name + ".kernel", {width, cin, cout}, fan_in, cout, rng);
    bias = reg.zeros(name + ".bias", {cout});
    dilation = dilation_;
  }

  Var<S> operator()(Tape<S>& tape, const Var<S>& x) const {
    return conv1d(tape, x, kernel, bias, dilation, pad);
  }
};

template <class S>
struct LstmState {
  Var<S> h;  // [1, units]
  Var<S> c;  // [1, units]
};

template <class S>
struct LstmCell {
  Var<S> w;  // [in + units, 4*units], gate order i, f, g, o
  Var<S> b;  // [4*units]
  int units = 0;

  LstmCell() = default;
  LstmCell(ParamRegistry<S>& reg, const std::string& name, int in, int units_, Rng& rng) {
    units = units_;
    w = reg.glorot(name + ".w", {in + units, 4 * units}, in + units, 4 * units, rng);
    std::vector<S> bias(4 * units, S(0));
    for (int i = units; i < 2 * units; ++i) bias[i] = S(1);  // forget gate bias
    b = reg.add(name + ".b", {4 * units}, std::move(bias));
  }

  LstmState<S> zero_state() const {
    return {zeros_var<S>({1, units}), zeros_var<S>({1, units})};
  }

  // x: [1, in]
  std::pair<Var<S>, LstmState<S>> step(Tape<S>& tape, const Var<S>& x,
                                       const LstmState<S>& state) const {
    auto z = add_rowvec(tape, matmul(tape, concat_cols(tape, x, state.h), w), b);
    auto i = sigmoid(tape, slice_cols(tape, z, 0, units));
    auto f = sigmoid(tape, slice_cols(tape, z, units, 2 * units));
    auto g = tanh_op(tape, slice_cols(tape, z, 2 * units, 3 * units));
    auto o = sigmoid(tape, slice_cols(tape, z, 3 * units, 4 * units));
    auto c = add(tape, mul(tape, f, state.c), mul(tape, i, g));
    auto h = mul(tape, o, tanh_op(tape, c));
    return {h, {h, c}};
  }
};

template <class S>
struct GruCell {
  Var<S> w_zr;  // [in + units, 2*units]
  Var<S> b_zr;  // [2*units]
  Var<S> w_h;   // [in + units, units]
  Var<S> b_h;   // [units]
  int units = 0;

  GruCell() = default;
  GruCell(ParamRegistry<S>& reg, const std::string& name, int in, int units_, Rng& rng) {
    units = units_;
    w_zr = reg.glorot(name + ".w_zr", {in + units, 2 * units}, in + units, 2 * units, rng);
    b_zr = reg.zeros(name + ".b_zr", {2 * units});
    w_h = reg.glorot(name + ".w_h", {in + units, units}, in + units, units, rng);
    b_h = reg.zeros(name + ".b_h", {units});
  }

  Var<S> zero_state() const { return zeros_var<S>({1, units}); }

  // h' = (1-z).h + z.candidate
  std::pair<Var<S>, Var<S>> step(Tape<S>& tape, const Var<S>& x, const Var<S>& h) const {
    auto zr = sigmoid(tape, add_rowvec(tape, matmul(tape, concat_cols(tape, x, h), w_zr), b_zr));
    auto z = slice_cols(tape, zr, 0, units);
    auto r = slice_cols(tape, zr, units, 2 * units);
    auto cand = tanh_op(
        tape, add_rowvec(tape, matmul(tape, concat_cols(tape, x, mul(tape, r, h)), w_h), b_h));
    auto one_minus_z = add_const(tape, scale(tape, z, S(-1)), S(1));
    auto h_new = add(tape, mul(tape, one_minus_z, h), mul(tape, z, cand));
    return {h_new, h_new};
  }
};

template <class S>
struct Highway {
  Dense<S> transform;
  Dense<S> gate;

  Highway() = default;
  Highway(ParamRegistry<S>& reg, const std::string& name, int dim, Rng& rng)
      : transform(reg, name + ".t", dim, dim, rng), gate(reg, name + ".g", dim, dim, rng) {
    // negative gate bias starts close to pass-through
    for (auto& v : gate.b->value) v = S(-1);
  }

  Var<S> operator()(Tape<S>& tape, const Var<S>& x) const {
    auto t = tanh_op(tape, transform(tape, x));
    auto g = sigmoid(tape, gate(tape, x));
    auto one_minus_g = add_const(tape, scale(tape, g, S(-1)), S(1));
    return add(tape, mul(tape, g, t), mul(tape, one_minus_g, x));
  }
};

}  // namespace waveflow
