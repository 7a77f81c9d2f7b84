#pragma once

// Conditional multi-scale normalizing flow over fixed-length waveform blocks:
// per stage, N steps of (actnorm, invertible 1x1 conv, affine coupling), with
// a squeeze between stages. Analysis maps a block to Gaussian space with an
// exact log-determinant; synthesis is the exact inverse.

#include "waveflow/nn.hpp"
#include "waveflow/params.hpp"
#include "waveflow/rng.hpp"
#include "waveflow/tensor.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace waveflow {

struct FlowConfig {
  int block_size = 960;      // K
  int frame_length = 10;     // L
  int stages = 5;            // M
  int steps_per_stage = 12;  // N
  int coupling_channels = 256;
  int position_dim = 64;
  double temperature = 0.7;
  bool identity_couplings = false;  // test hook: couplings become identity

  int frames() const { return block_size / frame_length; }          // J
  int stage_frames(int m) const { return frames() >> m; }           // timesteps at stage m
  int stage_channels(int m) const { return frame_length << m; }     // channels at stage m

  void validate() const {
    if (block_size <= 0 || frame_length <= 0 || stages < 1 || steps_per_stage < 1)
      throw std::invalid_argument("flow config: non-positive dimension");
    if (block_size % frame_length != 0)
      throw std::invalid_argument("flow config: K must be a multiple of L");
    int j = frames();
    if (j % (1 << (stages - 1)) != 0)
      throw std::invalid_argument("flow config: J must be divisible by 2^(M-1)");
    if (frame_length < 2)
      throw std::invalid_argument("flow config: L must be at least 2 for coupling splits");
    if (position_dim % 2 != 0)
      throw std::invalid_argument("flow config: position_dim must be even");
  }
};

// Per-stage conditioning rows: stage m has [J/2^m, D_c + position_dim].
template <class S>
struct ConditioningFrames {
  std::vector<Var<S>> per_stage;  // empty Var means unconditioned stage
};

namespace flowdetail {

template <class S>
inline Var<S> reciprocal(Tape<S>& tape, const Var<S>& a) {
  return unary_op(tape, a, "reciprocal", [](S x) { return S(1) / x; },
                  [](S x, S) { return S(-1) / (x * x); });
}

// Sinusoidal embeddings for rows 0..n-1, frequencies linearly spaced in
// [2*pi/(4n), pi], as (sin, cos) pairs.
template <class S>
inline Var<S> position_embeddings(int n_rows, int dim) {
  std::vector<S> data(static_cast<size_t>(n_rows) * dim);
  int half = dim / 2;
  double lo = 2.0 * M_PI / (4.0 * n_rows), hi = M_PI;
  for (int j = 0; j < n_rows; ++j)
    for (int i = 0; i < half; ++i) {
      double w = half > 1 ? lo + (hi - lo) * i / (half - 1) : lo;
      data[static_cast<size_t>(j) * dim + 2 * i] = static_cast<S>(std::sin(w * j));
      data[static_cast<size_t>(j) * dim + 2 * i + 1] = static_cast<S>(std::cos(w * j));
    }
  return make_var<S>({n_rows, dim}, std::move(data));
}

}  // namespace flowdetail

// Replicate c_t across the J frames of stage 1, append per-stage position
// embeddings, and pairwise-average the feature part between stages.
template <class S>
inline ConditioningFrames<S> upsample_conditioning(Tape<S>& tape, const Var<S>& c_t,
                                                   const FlowConfig& cfg) {
  ConditioningFrames<S> out;
  int j = cfg.frames();
  Var<S> feat;  // [J, D_c]
  if (c_t && c_t->size() > 0) {
    auto c_row = reshape(tape, c_t, {1, static_cast<int>(c_t->size())});
    auto ones = make_var<S>({j, 1}, std::vector<S>(j, S(1)));
    feat = matmul(tape, ones, c_row);
  }
  for (int m = 0; m < cfg.stages; ++m) {
    int rows = cfg.stage_frames(m);
    if (m > 0 && feat) feat = pair_average_rows(tape, feat);
    Var<S> stage;
    if (cfg.position_dim > 0) {
      auto pos = flowdetail::position_embeddings<S>(rows, cfg.position_dim);
      stage = feat ? concat_cols(tape, feat, pos) : pos;
    } else {
      stage = feat;  // may be null: fully unconditioned
    }
    out.per_stage.push_back(stage);
  }
  return out;
}

template <class S>
struct FlowStepParams {
  Var<S> actnorm_log_scale;  // [C]; scale stored as log so it stays positive
  Var<S> actnorm_bias;       // [C]
  Var<S> invconv_w;          // [C, C]
  Conv1dLayer<S> coupling_conv0, coupling_conv1, coupling_conv2;
};

template <class S>
class Flow {
 public:
  Flow() = default;

  Flow(ParamRegistry<S>& reg, const std::string& prefix, const FlowConfig& cfg, int cond_dim,
       Rng& rng)
      : cfg_(cfg), cond_dim_(cond_dim) {
    cfg_.validate();
    steps_.resize(cfg_.stages);
    for (int m = 0; m < cfg_.stages; ++m) {
      int c = cfg_.stage_channels(m);
      int in = c / 2 + total_cond_dim();
      for (int n = 0; n < cfg_.steps_per_stage; ++n) {
        std::string name = prefix + ".s" + std::to_string(m) + ".n" + std::to_string(n);
        FlowStepParams<S> p;
        p.actnorm_log_scale = reg.zeros(name + ".actnorm.log_scale", {c});
        p.actnorm_bias = reg.zeros(name + ".actnorm.bias", {c});
        p.invconv_w = reg.orthogonal(name + ".invconv.w", c, rng);
        if (!cfg_.identity_couplings) {
          int h = cfg_.coupling_channels;
          int cb = c - c / 2;  // transformed half; one wider when c is odd
          p.coupling_conv0 = Conv1dLayer<S>(reg, name + ".coupling.conv0", 3, in, h, rng);
          p.coupling_conv1 = Conv1dLayer<S>(reg, name + ".coupling.conv1", 1, h, h, rng);
          // zero-init output layer: identity transform at start
          p.coupling_conv2 =
              Conv1dLayer<S>(reg, name + ".coupling.conv2", 3, h, 2 * cb, rng, 1, true);
        }
        steps_[m].push_back(std::move(p));
      }
    }
  }

  const FlowConfig& config() const { return cfg_; }
  int cond_dim() const { return cond_dim_; }
  int total_cond_dim() const { return cond_dim_ + cfg_.position_dim; }

  // Any length with J = n/L divisible by 2^(M-1) is accepted; per-block use
  // passes exactly block_size samples, the vocoder passes whole utterances.
  int check_length(long n, const char* what) const {
    int j = static_cast<int>(n / cfg_.frame_length);
    if (n % cfg_.frame_length != 0 || j % (1 << (cfg_.stages - 1)) != 0)
      throw ShapeError(std::string("flow ") + what + ": length not a multiple of L*2^(M-1)");
    return j;
  }

  // y: block as [K] (or [J, L]); returns (z [1, K], total logdet scalar).
  std::pair<Var<S>, Var<S>> analysis(Tape<S>& tape, const Var<S>& y,
                                     const ConditioningFrames<S>& cond) const {
    int j = check_length(static_cast<long>(y->size()), "analysis");
    auto x = reshape(tape, y, {j, cfg_.frame_length});
    auto logdet_total = scalar_var<S>(S(0));
    for (int m = 0; m < cfg_.stages; ++m) {
      if (m > 0) x = reshape(tape, x, {j >> m, cfg_.stage_channels(m)});  // squeeze
      for (int n = 0; n < cfg_.steps_per_stage; ++n) {
        const auto& p = steps_[m][n];
        Var<S> ld;
        std::tie(x, ld) = actnorm_analysis(tape, x, p);
        logdet_total = add(tape, logdet_total, ld);
        std::tie(x, ld) = invconv_analysis(tape, x, p);
        logdet_total = add(tape, logdet_total, ld);
        std::tie(x, ld) = coupling_analysis(tape, x, cond.per_stage[m], p);
        logdet_total = add(tape, logdet_total, ld);
      }
    }
    auto z = reshape(tape, x, {1, j * cfg_.frame_length});
    return {z, logdet_total};
  }

  // Exact inverse of analysis. Gradients do not propagate through the
  // inverse 1x1 convolutions (synthesis is a sampling path).
  Var<S> synthesis(Tape<S>& tape, const Var<S>& z, const ConditioningFrames<S>& cond) const {
    int j = check_length(static_cast<long>(z->size()), "synthesis");
    int last = cfg_.stages - 1;
    auto x = reshape(tape, z, {j >> last, cfg_.stage_channels(last)});
    for (int m = last; m >= 0; --m) {
      for (int n = cfg_.steps_per_stage - 1; n >= 0; --n) {
        const auto& p = steps_[m][n];
        x = coupling_synthesis(tape, x, cond.per_stage[m], p);
        x = invconv_synthesis(tape, x, p);
        x = actnorm_synthesis(tape, x, p);
      }
      if (m > 0) x = reshape(tape, x, {j >> (m - 1), cfg_.stage_channels(m - 1)});
    }
    return reshape(tape, x, {1, j * cfg_.frame_length});
  }

  // 0.5 ||z||^2 + (K/2) ln(2 pi) - total_logdet
  Var<S> nll(Tape<S>& tape, const Var<S>& y, const ConditioningFrames<S>& cond) const {
    auto [z, ld] = analysis(tape, y, cond);
    auto half_sq = scale(tape, sum_sq(tape, z), S(0.5));
    auto with_const =
        add_const(tape, half_sq, static_cast<S>(0.5 * y->size() * std::log(2.0 * M_PI)));
    return sub(tape, with_const, ld);
  }

  // z = T * eps, eps ~ N(0, I_n)
  std::vector<S> sample_latent(Rng& rng, double temperature, long n = -1) const {
    if (temperature < 0) throw std::invalid_argument("sample_latent: negative temperature");
    std::vector<S> z(n < 0 ? cfg_.block_size : n);
    for (auto& v : z) v = static_cast<S>(temperature * rng.normal());
    return z;
  }

  // ---- individual steps (public for unit tests) ----

  std::pair<Var<S>, Var<S>> actnorm_analysis(Tape<S>& tape, const Var<S>& x,
                                             const FlowStepParams<S>& p) const {
    int t = x->shape[0];
    auto y = mul_rowvec(tape, add_rowvec(tape, x, p.actnorm_bias),
                        exp_op(tape, p.actnorm_log_scale));
    auto ld = scale(tape, sum(tape, p.actnorm_log_scale), static_cast<S>(t));
    return {y, ld};
  }

  Var<S> actnorm_synthesis(Tape<S>& tape, const Var<S>& y, const FlowStepParams<S>& p) const {
    auto inv_scale = exp_op(tape, scale(tape, p.actnorm_log_scale, S(-1)));
    auto neg_bias = scale(tape, p.actnorm_bias, S(-1));
    return add_rowvec(tape, mul_rowvec(tape, y, inv_scale), neg_bias);
  }

  std::pair<Var<S>, Var<S>> invconv_analysis(Tape<S>& tape, const Var<S>& x,
                                             const FlowStepParams<S>& p) const {
    int t = x->shape[0];
    auto y = matmul(tape, x, transpose(tape, p.invconv_w));
    auto ld = scale(tape, logdet(tape, p.invconv_w), static_cast<S>(t));
    return {y, ld};
  }

  Var<S> invconv_synthesis(Tape<S>& tape, const Var<S>& y, const FlowStepParams<S>& p) const {
    int c = p.invconv_w->shape[0];
    Eigen::PartialPivLU<detail::EMat<S>> lu((detail::mat(*p.invconv_w)));
    if (std::abs(lu.determinant()) < S(1e-12))
      throw NumericError("invconv synthesis: singular matrix");
    detail::EMat<S> winv = lu.inverse();
    std::vector<S> d(static_cast<size_t>(c) * c);
    detail::EMap<S>(d.data(), c, c) = winv.transpose();
    auto winv_t = make_var<S>({c, c}, std::move(d));
    return matmul(tape, y, winv_t);
  }

  std::pair<Var<S>, Var<S>> coupling_analysis(Tape<S>& tape, const Var<S>& x, const Var<S>& cond,
                                              const FlowStepParams<S>& p) const {
    if (cfg_.identity_couplings) return {x, scalar_var<S>(S(0))};
    int c = x->shape[1];
    auto xa = slice_cols(tape, x, 0, c / 2);
    auto xb = slice_cols(tape, x, c / 2, c);
    auto [shift, s] = coupling_net(tape, xa, cond, p, c);
    auto yb = mul(tape, add(tape, xb, shift), s);
    auto ld = sum(tape, log_op(tape, s));
    return {concat_cols(tape, xa, yb), ld};
  }

  Var<S> coupling_synthesis(Tape<S>& tape, const Var<S>& y, const Var<S>& cond,
                            const FlowStepParams<S>& p) const {
    if (cfg_.identity_couplings) return y;
    int c = y->shape[1];
    auto ya = slice_cols(tape, y, 0, c / 2);
    auto yb = slice_cols(tape, y, c / 2, c);
    auto [shift, s] = coupling_net(tape, ya, cond, p, c);
    auto xb = sub(tape, mul(tape, yb, flowdetail::reciprocal(tape, s)), shift);
    return concat_cols(tape, ya, xb);
  }

 private:
  // (shift, scale) from the 3-layer convnet; scale = sigmoid(raw + 2).
  std::pair<Var<S>, Var<S>> coupling_net(Tape<S>& tape, const Var<S>& xa, const Var<S>& cond,
                                         const FlowStepParams<S>& p, int c) const {
    Var<S> in = xa;
    if (cond) {
      if (cond->shape[0] != xa->shape[0])
        throw ShapeError("coupling: conditioning row count mismatch");
      in = concat_cols(tape, xa, cond);
    }
    auto h = tanh_op(tape, p.coupling_conv0(tape, in));
    h = tanh_op(tape, p.coupling_conv1(tape, h));
    auto o = p.coupling_conv2(tape, h);
    int cb = c - c / 2;
    auto raw_s = slice_cols(tape, o, 0, cb);
    auto shift = slice_cols(tape, o, cb, 2 * cb);
    auto s = sigmoid(tape, add_const(tape, raw_s, S(2)));
    return {shift, s};
  }

  FlowConfig cfg_;
  int cond_dim_ = 0;
  std::vector<std::vector<FlowStepParams<S>>> steps_;
};

}  // namespace waveflow
