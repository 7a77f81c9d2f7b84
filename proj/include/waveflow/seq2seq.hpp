#pragma once

// Text encoder (CBHG-lite) and the block-autoregressive attention decoder
// that emits per-step conditioning vectors and stop-token probabilities.

#include "waveflow/nn.hpp"
#include "waveflow/params.hpp"
#include "waveflow/rng.hpp"
#include "waveflow/tensor.hpp"

#include <string>
#include <vector>

namespace waveflow {

struct Seq2SeqConfig {
  int vocab_size = 0;
  int embedding_dim = 256;
  int bank_max_width = 8;  // conv bank widths 1..bank_max_width
  int bank_channels = 128;
  int highway_layers = 2;
  int gru_units = 128;  // per direction; encoder output dim = 2*gru_units
  int prenet_units1 = 256;
  int prenet_units2 = 128;
  double prenet_dropout = 0.5;
  int attention_units = 128;
  int attention_filters = 32;
  int attention_kernel = 31;
  int attention_rnn_units = 256;
  int decoder_units = 256;   // two residual LSTM layers
  int projection_dim = 512;  // D_proj
  int ar_input = 320;        // K/R samples fed back (K when no truncation)
  bool skip_connection = true;

  int encoder_dim() const { return 2 * gru_units; }
  int conditioning_dim() const {
    return projection_dim + (skip_connection ? ar_input : 0);
  }
};

namespace s2sdetail {

// Zero-pad rows so a width-w valid convolution behaves like asymmetric same
// padding (left (w-1)/2, right w/2); supports even widths.
template <class S>
inline Var<S> pad_rows(Tape<S>& tape, const Var<S>& x, int left, int right) {
  if (left == 0 && right == 0) return x;
  std::vector<Var<S>> parts;
  if (left > 0) parts.push_back(zeros_var<S>({left, x->shape[1]}));
  parts.push_back(x);
  if (right > 0) parts.push_back(zeros_var<S>({right, x->shape[1]}));
  return concat_rows(tape, parts);
}

}  // namespace s2sdetail

template <class S>
class Encoder {
 public:
  Encoder() = default;

  Encoder(ParamRegistry<S>& reg, const std::string& prefix, const Seq2SeqConfig& cfg, Rng& rng)
      : cfg_(cfg) {
    double lim = std::sqrt(6.0 / (cfg.vocab_size + cfg.embedding_dim));
    embedding_ = reg.uniform(prefix + ".embedding", {cfg.vocab_size, cfg.embedding_dim}, lim, rng);
    for (int w = 1; w <= cfg.bank_max_width; ++w) {
      auto layer = Conv1dLayer<S>(reg, prefix + ".bank" + std::to_string(w), w,
                                  cfg.embedding_dim, cfg.bank_channels, rng);
      layer.pad = ConvPad::Valid;  // padding applied explicitly for even widths
      bank_.push_back(layer);
    }
    proj1_ = Conv1dLayer<S>(reg, prefix + ".proj1", 3, cfg.bank_channels, cfg.embedding_dim, rng);
    proj2_ = Conv1dLayer<S>(reg, prefix + ".proj2", 3, cfg.embedding_dim, cfg.embedding_dim, rng);
    for (int h = 0; h < cfg.highway_layers; ++h)
      highways_.emplace_back(reg, prefix + ".highway" + std::to_string(h), cfg.embedding_dim, rng);
    gru_fwd_ = GruCell<S>(reg, prefix + ".gru_fwd", cfg.embedding_dim, cfg.gru_units, rng);
    gru_bwd_ = GruCell<S>(reg, prefix + ".gru_bwd", cfg.embedding_dim, cfg.gru_units, rng);
  }

  // ids -> [I, 2*gru_units]
  Var<S> operator()(Tape<S>& tape, const std::vector<int>& ids) const {
    if (ids.empty()) throw ShapeError("encode: empty token sequence");
    auto emb = gather_rows(tape, embedding_, ids);

    std::vector<Var<S>> bank_outs;
    for (int w = 1; w <= cfg_.bank_max_width; ++w) {
      auto padded = s2sdetail::pad_rows(tape, emb, (w - 1) / 2, w / 2);
      bank_outs.push_back(tanh_op(tape, bank_[w - 1](tape, padded)));
    }
    auto pooled = max_elems(tape, bank_outs);  // channel-wise max over the bank

    auto p = tanh_op(tape, proj1_(tape, pooled));
    auto res = add(tape, proj2_(tape, p), emb);
    for (const auto& hw : highways_) res = hw(tape, res);

    int n = res->shape[0];
    std::vector<Var<S>> fwd(n), bwd(n);
    auto hf = gru_fwd_.zero_state();
    for (int t = 0; t < n; ++t)
      std::tie(fwd[t], hf) = gru_fwd_.step(tape, slice_rows(tape, res, t, t + 1), hf);
    auto hb = gru_bwd_.zero_state();
    for (int t = n - 1; t >= 0; --t)
      std::tie(bwd[t], hb) = gru_bwd_.step(tape, slice_rows(tape, res, t, t + 1), hb);
    std::vector<Var<S>> rows(n);
    for (int t = 0; t < n; ++t) rows[t] = concat_cols(tape, fwd[t], bwd[t]);
    return concat_rows(tape, rows);
  }

 private:
  Seq2SeqConfig cfg_;
  Var<S> embedding_;
  std::vector<Conv1dLayer<S>> bank_;
  Conv1dLayer<S> proj1_, proj2_;
  std::vector<Highway<S>> highways_;
  GruCell<S> gru_fwd_, gru_bwd_;
};

template <class S>
struct DecoderState {
  LstmState<S> attention_rnn;
  LstmState<S> decoder1, decoder2;
  Var<S> prev_context;  // [1, D_e]
  Var<S> prev_weights;  // [1, I]
  Var<S> cum_weights;   // [1, I]
  Var<S> prev_tail;     // [1, ar_input]
};

template <class S>
class Decoder {
 public:
  Decoder() = default;

  Decoder(ParamRegistry<S>& reg, const std::string& prefix, const Seq2SeqConfig& cfg, Rng& rng)
      : cfg_(cfg),
        prenet1_(reg, prefix + ".prenet1", cfg.ar_input, cfg.prenet_units1, rng),
        prenet2_(reg, prefix + ".prenet2", cfg.prenet_units1, cfg.prenet_units2, rng),
        attn_rnn_(reg, prefix + ".attn_rnn", cfg.prenet_units2 + cfg.encoder_dim(),
                  cfg.attention_rnn_units, rng),
        query_proj_(reg, prefix + ".attn.query", cfg.attention_rnn_units, cfg.attention_units, rng),
        memory_proj_(reg, prefix + ".attn.memory", cfg.encoder_dim(), cfg.attention_units, rng),
        location_proj_(reg, prefix + ".attn.location", cfg.attention_filters, cfg.attention_units,
                       rng),
        dec1_(reg, prefix + ".dec1", cfg.attention_rnn_units + cfg.encoder_dim(),
              cfg.decoder_units, rng),
        dec2_(reg, prefix + ".dec2", cfg.decoder_units, cfg.decoder_units, rng),
        out_proj_(reg, prefix + ".out_proj", cfg.decoder_units, cfg.projection_dim, rng),
        // zero-init: p(stop)=0.5 at the start, eos loss begins at ln 2
        stop_head_(reg, prefix + ".stop", cfg.conditioning_dim(), 1, rng, true) {
    location_conv_ = Conv1dLayer<S>(reg, prefix + ".attn.location_conv", cfg.attention_kernel, 1,
                                    cfg.attention_filters, rng);
    score_v_ = reg.glorot(prefix + ".attn.v", {cfg.attention_units, 1}, cfg.attention_units, 1, rng);
  }

  const Seq2SeqConfig& config() const { return cfg_; }

  DecoderState<S> initial_state(int n_tokens) const {
    DecoderState<S> st;
    st.attention_rnn = attn_rnn_.zero_state();
    st.decoder1 = dec1_.zero_state();
    st.decoder2 = dec2_.zero_state();
    st.prev_context = zeros_var<S>({1, cfg_.encoder_dim()});
    st.prev_weights = zeros_var<S>({1, n_tokens});
    st.cum_weights = zeros_var<S>({1, n_tokens});
    st.prev_tail = zeros_var<S>({1, cfg_.ar_input});  // go frame
    return st;
  }

  // Two tanh affine layers; dropout in training mode only.
  Var<S> prenet(Tape<S>& tape, const Var<S>& tail, bool training, Rng& rng) const {
    auto u01 = [&rng] { return rng.uniform(); };
    auto h = tanh_op(tape, prenet1_(tape, tail));
    h = dropout(tape, h, cfg_.prenet_dropout, training, u01);
    h = tanh_op(tape, prenet2_(tape, h));
    return dropout(tape, h, cfg_.prenet_dropout, training, u01);
  }

  // Location-sensitive attention.
  std::pair<Var<S>, Var<S>> attend(Tape<S>& tape, const Var<S>& query, const Var<S>& enc,
                                   const Var<S>& prev_weights) const {
    int n = enc->shape[0];
    auto wq = query_proj_(tape, query);                 // [1, att]
    auto ve = memory_proj_(tape, enc);                  // [I, att]
    auto f = location_conv_(tape, transpose(tape, prev_weights));  // [I, filters]
    auto uf = location_proj_(tape, f);                  // [I, att]
    auto hidden = tanh_op(
        tape, add_rowvec(tape, add(tape, ve, uf), reshape(tape, wq, {cfg_.attention_units})));
    auto scores = reshape(tape, matmul(tape, hidden, score_v_), {n});
    auto weights = reshape(tape, softmax(tape, scores), {1, n});
    auto context = matmul(tape, weights, enc);  // [1, D_e]
    return {context, weights};
  }

  // One decoder step: conditioning vector c_t plus updated state.
  std::pair<Var<S>, DecoderState<S>> step(Tape<S>& tape, const DecoderState<S>& state,
                                          const Var<S>& enc, bool training, Rng& rng) const {
    if (!state.prev_tail) throw std::invalid_argument("decoder step: uninitialized state");
    DecoderState<S> next = state;
    auto p = prenet(tape, state.prev_tail, training, rng);
    auto attn_in = concat_cols(tape, p, state.prev_context);
    Var<S> attn_out;
    std::tie(attn_out, next.attention_rnn) = attn_rnn_.step(tape, attn_in, state.attention_rnn);
    auto [context, weights] = attend(tape, attn_out, enc, state.prev_weights);
    next.prev_context = context;
    next.prev_weights = weights;
    next.cum_weights = add(tape, state.cum_weights, weights);

    auto d0 = concat_cols(tape, attn_out, context);
    Var<S> l1, l2;
    std::tie(l1, next.decoder1) = dec1_.step(tape, d0, state.decoder1);
    std::tie(l2, next.decoder2) = dec2_.step(tape, l1, state.decoder2);
    auto r2 = add(tape, l1, l2);  // residual over the second layer
    auto proj = out_proj_(tape, r2);
    auto c_t = cfg_.skip_connection ? concat_cols(tape, proj, state.prev_tail) : proj;
    return {c_t, next};
  }

  // s_hat in (0, 1)
  Var<S> stop_token(Tape<S>& tape, const Var<S>& c_t) const {
    return sigmoid(tape, stop_head_(tape, c_t));
  }

 private:
  Seq2SeqConfig cfg_;
  Dense<S> prenet1_, prenet2_;
  LstmCell<S> attn_rnn_;
  Dense<S> query_proj_, memory_proj_, location_proj_;
  Conv1dLayer<S> location_conv_;
  Var<S> score_v_;
  LstmCell<S> dec1_, dec2_;
  Dense<S> out_proj_;
  Dense<S> stop_head_;
};

// Mean binary cross entropy with predictions clamped to [1e-7, 1-1e-7].
// mask[t] == 0 excludes a step (batch padding).
template <class S>
inline Var<S> eos_loss(Tape<S>& tape, const std::vector<Var<S>>& predictions,
                       const std::vector<int>& labels, const std::vector<int>& mask = {}) {
  if (predictions.empty() || predictions.size() != labels.size())
    throw ShapeError("eos_loss: prediction/label count mismatch");
  Var<S> total = scalar_var<S>(S(0));
  S count = 0;
  for (size_t t = 0; t < predictions.size(); ++t) {
    if (!mask.empty() && mask[t] == 0) continue;
    if (labels[t] != 0 && labels[t] != 1) throw std::invalid_argument("eos_loss: labels must be 0/1");
    auto p = clamp(tape, predictions[t], S(1e-7), S(1) - S(1e-7));
    Var<S> term;
    if (labels[t] == 1)
      term = scale(tape, log_op(tape, p), S(-1));
    else
      term = scale(tape, log_op(tape, add_const(tape, scale(tape, p, S(-1)), S(1))), S(-1));
    total = add(tape, total, reshape(tape, term, {1}));
    count += 1;
  }
  if (count == 0) return scalar_var<S>(S(0));
  return scale(tape, total, S(1) / count);
}

}  // namespace waveflow
