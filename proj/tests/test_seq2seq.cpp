#include "waveflow/gradcheck.hpp"
#include "waveflow/seq2seq.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace waveflow;

namespace {

Seq2SeqConfig tiny_config() {
  Seq2SeqConfig cfg;
  cfg.vocab_size = 5;
  cfg.embedding_dim = 6;
  cfg.bank_max_width = 4;
  cfg.bank_channels = 5;
  cfg.highway_layers = 2;
  cfg.gru_units = 4;
  cfg.prenet_units1 = 6;
  cfg.prenet_units2 = 4;
  cfg.attention_units = 5;
  cfg.attention_filters = 3;
  cfg.attention_kernel = 5;
  cfg.attention_rnn_units = 6;
  cfg.decoder_units = 6;
  cfg.projection_dim = 7;
  cfg.ar_input = 8;
  return cfg;
}

template <class S>
Var<S> random_tail(const Seq2SeqConfig& cfg, Rng& rng) {
  std::vector<S> d(cfg.ar_input);
  for (auto& v : d) v = S(rng.normal());
  return make_var<S>({1, cfg.ar_input}, std::move(d));
}

}  // namespace

TEST(Encoder, OutputShape) {
  auto cfg = tiny_config();
  Rng rng(11);
  ParamRegistry<double> reg;
  Encoder<double> enc(reg, "enc", cfg, rng);
  Tape<double> tape;
  for (int n : {1, 2, 7}) {
    std::vector<int> ids(n);
    for (int i = 0; i < n; ++i) ids[i] = i % cfg.vocab_size;
    auto out = enc(tape, ids);
    EXPECT_EQ(out->shape, (Shape{n, cfg.encoder_dim()}));
    for (double v : out->value) EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_THROW(enc(tape, {}), ShapeError);
}

TEST(Encoder, DependsOnEveryToken) {
  auto cfg = tiny_config();
  Rng rng(12);
  ParamRegistry<double> reg;
  Encoder<double> enc(reg, "enc", cfg, rng);
  Tape<double> tape;
  std::vector<int> ids{0, 1, 2, 3};
  auto base = enc(tape, ids)->value;
  for (size_t t = 0; t < ids.size(); ++t) {
    auto mutated = ids;
    mutated[t] = (mutated[t] + 1) % cfg.vocab_size;
    auto out = enc(tape, mutated)->value;
    double diff = 0;
    for (size_t i = 0; i < out.size(); ++i) diff += std::abs(out[i] - base[i]);
    EXPECT_GT(diff, 1e-8) << "token " << t;
  }
}

TEST(Attention, WeightsFormSimplex) {
  auto cfg = tiny_config();
  Rng rng(21);
  ParamRegistry<double> reg;
  Encoder<double> enc(reg, "enc", cfg, rng);
  Decoder<double> dec(reg, "dec", cfg, rng);
  Tape<double> tape;
  std::vector<int> ids{0, 1, 2, 3, 4, 1, 2};
  auto memory = enc(tape, ids);
  auto st = dec.initial_state(static_cast<int>(ids.size()));
  st.prev_tail = random_tail<double>(cfg, rng);
  for (int t = 0; t < 3; ++t) {
    auto [c_t, next] = dec.step(tape, st, memory, false, rng);
    double total = 0;
    for (double w : next.prev_weights->value) {
      EXPECT_GE(w, 0.0);
      total += w;
    }
    EXPECT_NEAR(total, 1.0, 1e-10);
    st = next;
    st.prev_tail = random_tail<double>(cfg, rng);
  }
}

TEST(Attention, ZeroScoreParamsGiveUniformWeights) {
  auto cfg = tiny_config();
  Rng rng(22);
  ParamRegistry<double> reg;
  Decoder<double> dec(reg, "dec", cfg, rng);
  auto v = reg.get("dec.attn.v");
  std::fill(v->value.begin(), v->value.end(), 0.0);
  Tape<double> tape;
  int n = 6;
  std::vector<double> mem(n * cfg.encoder_dim());
  for (auto& x : mem) x = rng.normal();
  auto memory = make_var<double>({n, cfg.encoder_dim()}, std::move(mem));
  std::vector<double> q(cfg.attention_rnn_units, 0.3);
  auto query = make_var<double>({1, cfg.attention_rnn_units}, std::move(q));
  auto prev = zeros_var<double>({1, n});
  auto [context, weights] = dec.attend(tape, query, memory, prev);
  for (double w : weights->value) EXPECT_NEAR(w, 1.0 / n, 1e-12);
  EXPECT_EQ(context->shape, (Shape{1, cfg.encoder_dim()}));
}

TEST(Attention, LocationTermUsesPreviousWeights) {
  auto cfg = tiny_config();
  Rng rng(23);
  ParamRegistry<double> reg;
  Decoder<double> dec(reg, "dec", cfg, rng);
  Tape<double> tape;
  int n = 8;
  std::vector<double> mem(n * cfg.encoder_dim());
  for (auto& x : mem) x = rng.normal();
  auto memory = make_var<double>({n, cfg.encoder_dim()}, std::move(mem));
  std::vector<double> q(cfg.attention_rnn_units);
  for (auto& x : q) x = rng.normal();
  auto query = make_var<double>({1, cfg.attention_rnn_units}, std::move(q));

  auto w_zero = dec.attend(tape, query, memory, zeros_var<double>({1, n})).second->value;
  std::vector<double> peaked(n, 0.0);
  peaked[3] = 1.0;
  auto w_peak = dec.attend(tape, query, memory, make_var<double>({1, n}, std::move(peaked)))
                    .second->value;
  double diff = 0;
  for (int i = 0; i < n; ++i) diff += std::abs(w_zero[i] - w_peak[i]);
  EXPECT_GT(diff, 1e-10);
}

TEST(Decoder, CumulativeWeightsAccumulate) {
  auto cfg = tiny_config();
  Rng rng(31);
  ParamRegistry<double> reg;
  Encoder<double> enc(reg, "enc", cfg, rng);
  Decoder<double> dec(reg, "dec", cfg, rng);
  Tape<double> tape;
  std::vector<int> ids{0, 1, 2, 3};
  auto memory = enc(tape, ids);
  auto st = dec.initial_state(4);
  std::vector<double> expected(4, 0.0);
  for (int t = 0; t < 3; ++t) {
    st.prev_tail = random_tail<double>(cfg, rng);
    auto [c_t, next] = dec.step(tape, st, memory, false, rng);
    for (int i = 0; i < 4; ++i) expected[i] += next.prev_weights->value[i];
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(next.cum_weights->value[i], expected[i], 1e-12);
    st = next;
  }
}

TEST(Decoder, SkipConnectionCarriesTail) {
  auto cfg = tiny_config();
  Rng rng(32);
  ParamRegistry<double> reg;
  Encoder<double> enc(reg, "enc", cfg, rng);
  Decoder<double> dec(reg, "dec", cfg, rng);
  Tape<double> tape;
  auto memory = enc(tape, {0, 1, 2});
  auto st = dec.initial_state(3);
  auto tail = random_tail<double>(cfg, rng);
  st.prev_tail = tail;
  auto [c_t, next] = dec.step(tape, st, memory, false, rng);
  ASSERT_EQ(c_t->shape, (Shape{1, cfg.projection_dim + cfg.ar_input}));
  for (int i = 0; i < cfg.ar_input; ++i)
    EXPECT_DOUBLE_EQ(c_t->value[cfg.projection_dim + i], tail->value[i]);
}

TEST(Decoder, NoSkipConnectionShrinksConditioning) {
  auto cfg = tiny_config();
  cfg.skip_connection = false;
  EXPECT_EQ(cfg.conditioning_dim(), cfg.projection_dim);
  Rng rng(33);
  ParamRegistry<double> reg;
  Encoder<double> enc(reg, "enc", cfg, rng);
  Decoder<double> dec(reg, "dec", cfg, rng);
  Tape<double> tape;
  auto memory = enc(tape, {0, 1});
  auto st = dec.initial_state(2);
  st.prev_tail = random_tail<double>(cfg, rng);
  auto [c_t, next] = dec.step(tape, st, memory, false, rng);
  EXPECT_EQ(c_t->shape, (Shape{1, cfg.projection_dim}));
}

// Conditioning at step t must not change when a later tail input changes.
TEST(Decoder, Causality) {
  auto cfg = tiny_config();
  Rng rng(34);
  ParamRegistry<double> reg;
  Encoder<double> enc(reg, "enc", cfg, rng);
  Decoder<double> dec(reg, "dec", cfg, rng);
  Tape<double> tape;
  auto memory = enc(tape, {0, 1, 2, 3});

  std::vector<Var<double>> tails;
  Rng tail_rng(99);
  for (int t = 0; t < 4; ++t) tails.push_back(random_tail<double>(cfg, tail_rng));

  auto run = [&](const std::vector<Var<double>>& seq) {
    std::vector<std::vector<double>> outs;
    auto st = dec.initial_state(4);
    for (const auto& tail : seq) {
      st.prev_tail = tail;
      auto [c_t, next] = dec.step(tape, st, memory, false, rng);
      outs.push_back(c_t->value);
      st = next;
    }
    return outs;
  };

  auto base = run(tails);
  auto perturbed = tails;
  perturbed[2] = random_tail<double>(cfg, tail_rng);
  auto out2 = run(perturbed);
  // gemm rounding may differ at the last bit between passes, hence the epsilon
  for (int t = 0; t < 2; ++t)
    for (size_t i = 0; i < base[t].size(); ++i)
      EXPECT_NEAR(base[t][i], out2[t][i], 1e-12) << "step " << t;
  double diff = 0;
  for (size_t i = 0; i < base[2].size(); ++i) diff += std::abs(base[2][i] - out2[2][i]);
  EXPECT_GT(diff, 1e-10);
}

TEST(Decoder, PrenetDropoutOnlyInTraining) {
  auto cfg = tiny_config();
  Rng rng(35);
  ParamRegistry<double> reg;
  Decoder<double> dec(reg, "dec", cfg, rng);
  Tape<double> tape;
  auto tail = random_tail<double>(cfg, rng);
  auto a = dec.prenet(tape, tail, false, rng)->value;
  auto b = dec.prenet(tape, tail, false, rng)->value;
  for (size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  Rng r1(1), r2(2);
  auto c = dec.prenet(tape, tail, true, r1)->value;
  auto d = dec.prenet(tape, tail, true, r2)->value;
  double diff = 0;
  for (size_t i = 0; i < c.size(); ++i) diff += std::abs(c[i] - d[i]);
  EXPECT_GT(diff, 1e-10);
}

TEST(StopToken, OpenInterval) {
  auto cfg = tiny_config();
  Rng rng(41);
  ParamRegistry<double> reg;
  Encoder<double> enc(reg, "enc", cfg, rng);
  Decoder<double> dec(reg, "dec", cfg, rng);
  Tape<double> tape;
  auto memory = enc(tape, {0, 1, 2});
  auto st = dec.initial_state(3);
  st.prev_tail = random_tail<double>(cfg, rng);
  auto [c_t, next] = dec.step(tape, st, memory, false, rng);
  auto s = dec.stop_token(tape, c_t);
  ASSERT_EQ(s->size(), 1);
  EXPECT_GT(s->value[0], 0.0);
  EXPECT_LT(s->value[0], 1.0);
}

TEST(EosLoss, HandComputedValues) {
  Tape<double> tape;
  auto p1 = make_var<double>({1, 1}, {0.8});
  auto p2 = make_var<double>({1, 1}, {0.3});
  // labels 1, 0: mean of -log 0.8 and -log 0.7
  auto loss = eos_loss(tape, {p1, p2}, {1, 0});
  double expected = 0.5 * (-std::log(0.8) - std::log(0.7));
  EXPECT_NEAR(loss->scalar(), expected, 1e-12);
}

TEST(EosLoss, ClampKeepsExtremePredictionsFinite) {
  Tape<double> tape;
  auto p0 = make_var<double>({1, 1}, {0.0});
  auto p1 = make_var<double>({1, 1}, {1.0});
  auto loss = eos_loss(tape, {p0, p1}, {1, 0});
  EXPECT_TRUE(std::isfinite(loss->scalar()));
  EXPECT_NEAR(loss->scalar(), -std::log(1e-7), 1e-4);
}

TEST(EosLoss, MaskExcludesPaddedSteps) {
  Tape<double> tape;
  auto p1 = make_var<double>({1, 1}, {0.8});
  auto p2 = make_var<double>({1, 1}, {0.5});
  auto masked = eos_loss(tape, {p1, p2}, {1, 0}, {1, 0});
  EXPECT_NEAR(masked->scalar(), -std::log(0.8), 1e-12);
  EXPECT_THROW(eos_loss(tape, {p1}, {1, 0}), ShapeError);
  EXPECT_THROW(eos_loss(tape, {p1}, {2}), std::invalid_argument);
}

TEST(GradCheck, EncoderParameters) {
  auto cfg = tiny_config();
  cfg.bank_max_width = 3;
  cfg.highway_layers = 1;
  Rng rng(51);
  ParamRegistry<double> reg;
  Encoder<double> enc(reg, "enc", cfg, rng);
  std::vector<int> ids{0, 1, 2};
  auto f = [&](Tape<double>& tape) { return sum_sq(tape, enc(tape, ids)); };
  std::vector<Var<double>> inputs;
  for (auto& [name, var] : reg.ordered()) inputs.push_back(var);
  // max-pool leaves some kernel weights with vanishing gradients; the raised
  // floor keeps finite-difference roundoff on those from dominating
  EXPECT_LT(grad_check(f, inputs, 1e-5, 1e-6), 1e-4);
}

TEST(GradCheck, DecoderStepAndLosses) {
  auto cfg = tiny_config();
  Rng rng(52);
  ParamRegistry<double> reg;
  Decoder<double> dec(reg, "dec", cfg, rng);
  int n = 3;
  std::vector<double> mem(n * cfg.encoder_dim());
  Rng data_rng(7);
  for (auto& x : mem) x = data_rng.normal();
  auto memory = make_var<double>({n, cfg.encoder_dim()}, std::move(mem), true);
  auto tail0 = random_tail<double>(cfg, data_rng);
  auto tail1 = random_tail<double>(cfg, data_rng);
  tail0->requires_grad = true;
  tail1->requires_grad = true;

  auto f = [&](Tape<double>& tape) {
    Rng step_rng(0);
    auto st = dec.initial_state(n);
    st.prev_tail = tail0;
    auto [c0, s1] = dec.step(tape, st, memory, false, step_rng);
    s1.prev_tail = tail1;
    auto [c1, s2] = dec.step(tape, s1, memory, false, step_rng);
    auto stop0 = dec.stop_token(tape, c0);
    auto stop1 = dec.stop_token(tape, c1);
    auto fit = add(tape, sum_sq(tape, c0), sum_sq(tape, c1));
    return add(tape, fit, eos_loss(tape, {stop0, stop1}, {0, 1}));
  };
  std::vector<Var<double>> inputs{tail0, tail1, memory};
  for (auto& [name, var] : reg.ordered()) inputs.push_back(var);
  // the larger step tames roundoff from the O(10) loss magnitude
  EXPECT_LT(grad_check(f, inputs, 1e-4, 1e-6), 1e-4);
}
