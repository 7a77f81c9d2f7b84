#include "waveflow/adam.hpp"
#include "waveflow/gradcheck.hpp"
#include "waveflow/nn.hpp"
#include "waveflow/rng.hpp"
#include "waveflow/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace waveflow;

namespace {

Var<double> randn(Shape shape, Rng& rng, bool requires_grad = true) {
  std::vector<double> d(numel(shape));
  for (auto& v : d) v = rng.normal();
  return make_var<double>(std::move(shape), std::move(d), requires_grad);
}

}  // namespace

TEST(Conv1d, IdentityKernel) {
  Tape<double> tape;
  Rng rng(1);
  auto x = randn({6, 3}, rng, false);
  // centered delta: kernel[1][i][i] = 1
  auto k = zeros_var<double>({3, 3, 3});
  for (int i = 0; i < 3; ++i) k->value[(1 * 3 + i) * 3 + i] = 1.0;
  auto b = zeros_var<double>({3});
  auto y = conv1d(tape, x, k, b);
  for (long i = 0; i < x->size(); ++i) EXPECT_DOUBLE_EQ(y->value[i], x->value[i]);
}

TEST(Conv1d, AllOnesKernelHandComputed) {
  Tape<double> tape;
  auto x = make_var<double>({3, 1}, {1, 2, 3});
  auto k = make_var<double>({3, 1, 1}, {1, 1, 1});
  auto b = zeros_var<double>({1});
  auto y = conv1d(tape, x, k, b);
  EXPECT_DOUBLE_EQ(y->value[0], 3.0);
  EXPECT_DOUBLE_EQ(y->value[1], 6.0);
  EXPECT_DOUBLE_EQ(y->value[2], 5.0);
}

TEST(Conv1d, OutputShape) {
  Tape<double> tape;
  Rng rng(2);
  auto y = conv1d(tape, randn({5, 4}, rng), randn({3, 4, 7}, rng), zeros_var<double>({7}));
  EXPECT_EQ(y->shape, (Shape{5, 7}));
}

TEST(Conv1d, EvenKernelWidthRejected) {
  Tape<double> tape;
  Rng rng(3);
  EXPECT_THROW(conv1d(tape, randn({4, 2}, rng), randn({2, 2, 2}, rng), zeros_var<double>({2})),
               ShapeError);
}

TEST(Conv1d, Linearity) {
  Rng rng(4);
  auto k = randn({3, 2, 3}, rng, false);
  auto bias = zeros_var<double>({3});
  auto x = randn({7, 2}, rng, false), y = randn({7, 2}, rng, false);
  double a = 1.7, b = -0.4;
  Tape<double> tape;
  auto lhs_in = zeros_var<double>({7, 2});
  for (long i = 0; i < lhs_in->size(); ++i)
    lhs_in->value[i] = a * x->value[i] + b * y->value[i];
  auto lhs = conv1d(tape, lhs_in, k, bias);
  auto cx = conv1d(tape, x, k, bias), cy = conv1d(tape, y, k, bias);
  for (long i = 0; i < lhs->size(); ++i)
    EXPECT_NEAR(lhs->value[i], a * cx->value[i] + b * cy->value[i],
                1e-6 * std::max(1.0, std::abs(lhs->value[i])));
}

TEST(Backward, QuadraticGradient) {
  Tape<double> tape;
  Rng rng(5);
  auto x = randn({4, 3}, rng);
  auto loss = sum(tape, mul(tape, x, x));
  tape.backward(loss);
  for (long i = 0; i < x->size(); ++i) EXPECT_NEAR(x->grad[i], 2.0 * x->value[i], 1e-12);
}

TEST(Backward, UnusedParameterGetsZero) {
  Tape<double> tape;
  Rng rng(6);
  auto x = randn({3, 1}, rng);
  auto p = randn({2, 2}, rng);
  auto loss = sum(tape, x);
  tape.backward(loss);
  p->ensure_grad();
  for (long i = 0; i < p->size(); ++i) EXPECT_DOUBLE_EQ(p->grad[i], 0.0);
}

TEST(Backward, NonScalarLossRejected) {
  Tape<double> tape;
  Rng rng(7);
  auto x = randn({3, 2}, rng);
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Backward, GradientAdditivity) {
  Rng rng(8);
  auto make_inputs = [&] { return randn({5, 2}, rng); };
  auto x = make_inputs();

  // combined
  Tape<double> t1;
  auto l = add(t1, sum_sq(t1, x), sum(t1, tanh_op(t1, x)));
  t1.backward(l);
  auto combined = x->grad;

  x->grad.clear();
  Tape<double> t2;
  t2.backward(sum_sq(t2, x));
  Tape<double> t3;
  t3.backward(sum(t3, tanh_op(t3, x)));
  for (long i = 0; i < x->size(); ++i) EXPECT_NEAR(combined[i], x->grad[i], 1e-12);
}

TEST(Numerics, NonFiniteDetected) {
  Tape<double> tape;
  auto x = make_var<double>({2}, {1.0, 0.0});
  EXPECT_THROW(log_op(tape, x), NumericError);
}

TEST(GradCheck, ConstantGradient) {
  Rng rng(9);
  auto x = randn({6}, rng);
  double err = grad_check([&](Tape<double>& t) { return sum(t, x); }, {x});
  EXPECT_LT(err, 1e-10);
}

TEST(GradCheck, TanhAtZero) {
  auto x = zeros_var<double>({5}, true);
  double err = grad_check([&](Tape<double>& t) { return sum(t, tanh_op(t, x)); }, {x});
  EXPECT_LT(err, 1e-8);
  // analytic gradient is exactly 1
  for (long i = 0; i < x->size(); ++i) EXPECT_DOUBLE_EQ(x->grad[i], 1.0);
}

// Property: every registered differentiable op passes finite differences.
TEST(GradCheck, AllOpsRandomizedSeeds) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 100);
    auto a = randn({4, 6}, rng);
    auto b = randn({4, 6}, rng);
    auto m = randn({6, 3}, rng);
    auto w = randn({3, 2, 5}, rng);
    auto bias = randn({5}, rng);
    auto vrow = randn({6}, rng);
    auto sq = randn({4, 4}, rng);
    auto table = randn({5, 3}, rng);
    std::vector<Var<double>> inputs = {a, b, m, w, bias, vrow, sq, table};
    auto f = [&](Tape<double>& t) -> Var<double> {
      auto s1 = sum(t, mul(t, a, b));
      auto s2 = sum(t, tanh_op(t, matmul(t, a, m)));
      auto s3 = sum_sq(t, conv1d(t, slice_cols(t, a, 0, 2), w, bias, 2));
      auto s4 = sum(t, sigmoid(t, add_rowvec(t, b, vrow)));
      auto s5 = sum(t, mul_rowvec(t, exp_op(t, scale(t, a, 0.3)), vrow));
      auto s6 = logdet(t, sq);
      auto s7 = sum(t, softmax(t, reshape(t, slice_rows(t, a, 0, 1), {6})));
      auto s8 = sum(t, gather_rows(t, table, {0, 2, 4, 2}));
      auto s9 = sum(t, pair_average_rows(t, concat_cols(t, a, b)));
      auto s10 = mean(t, log_op(t, add_const(t, mul(t, b, b), 0.5)));
      auto s11 = sum(t, max_elems(t, {a, b}));
      auto s12 = sum(t, sub(t, transpose(t, a), transpose(t, b)));
      auto total = add(t, add(t, add(t, s1, s2), add(t, s3, s4)), add(t, add(t, s5, s6), s7));
      total = add(t, total, add(t, add(t, s8, s9), add(t, add(t, s10, s11), s12)));
      return total;
    };
    EXPECT_LT(grad_check(f, inputs), 1e-4) << "seed " << seed;
  }
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  Rng rng(10);
  ParamRegistry<double> reg;
  auto p = reg.glorot("p", {3, 3}, 3, 3, rng);
  auto before = p->value;
  p->ensure_grad();
  AdamState<double> st;
  adam_step(reg, st);
  EXPECT_EQ(st.t, 1);
  for (long i = 0; i < p->size(); ++i) EXPECT_DOUBLE_EQ(p->value[i], before[i]);
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
  ParamRegistry<double> reg;
  auto p = reg.add("p", {1}, {0.5});
  p->ensure_grad();
  p->grad[0] = 3.7;  // any nonzero gradient
  AdamState<double> st;
  st.learning_rate = 1e-3;
  adam_step(reg, st);
  double delta = 0.5 - p->value[0];
  EXPECT_GT(delta, 0.0);  // decreases along sign(g)
  EXPECT_NEAR(delta, 1e-3, 1e-5);  // within 1% of lr
}

TEST(Adam, Deterministic) {
  auto run = [] {
    Rng rng(11);
    ParamRegistry<double> reg;
    auto p = reg.glorot("p", {4}, 4, 4, rng);
    AdamState<double> st;
    for (int i = 0; i < 3; ++i) {
      p->ensure_grad();
      for (long j = 0; j < p->size(); ++j) p->grad[j] = 0.1 * (j + 1);
      adam_step(reg, st);
      reg.zero_grads();
    }
    return p->value;
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, RegistrationOrderInvariant) {
  auto run = [](bool swap) {
    ParamRegistry<double> reg;
    Var<double> a, b;
    if (swap) {
      b = reg.add("b", {2}, {1.0, 2.0});
      a = reg.add("a", {2}, {3.0, 4.0});
    } else {
      a = reg.add("a", {2}, {3.0, 4.0});
      b = reg.add("b", {2}, {1.0, 2.0});
    }
    a->ensure_grad();
    b->ensure_grad();
    a->grad = {0.5, -0.5};
    b->grad = {1.5, 2.5};
    AdamState<double> st;
    adam_step(reg, st);
    return std::make_pair(a->value, b->value);
  };
  EXPECT_EQ(run(false), run(true));
}

TEST(Adam, NonFiniteGradientRejected) {
  ParamRegistry<double> reg;
  auto p = reg.add("p", {1}, {0.0});
  p->ensure_grad();
  p->grad[0] = std::numeric_limits<double>::quiet_NaN();
  AdamState<double> st;
  EXPECT_THROW(adam_step(reg, st), NumericError);
}

TEST(Lstm, AllZeroCase) {
  Rng rng(12);
  ParamRegistry<double> reg;
  LstmCell<double> cell(reg, "lstm", 3, 2, rng);
  for (auto& v : cell.w->value) v = 0.0;
  for (auto& v : cell.b->value) v = 0.0;
  Tape<double> tape;
  auto [out, st] = cell.step(tape, zeros_var<double>({1, 3}), cell.zero_state());
  for (double v : out->value) EXPECT_DOUBLE_EQ(v, 0.0);
  for (double v : st.c->value) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Lstm, MatchesHandExpandedGates) {
  Rng rng(13);
  ParamRegistry<double> reg;
  const int in = 3, units = 2;
  LstmCell<double> cell(reg, "lstm", in, units, rng);
  std::vector<double> x = {0.3, -0.7, 0.2}, h0 = {0.1, -0.2}, c0 = {0.4, 0.05};
  Tape<double> tape;
  auto xs = make_var<double>({1, in}, x);
  LstmState<double> st{make_var<double>({1, units}, h0), make_var<double>({1, units}, c0)};
  auto [out, st1] = cell.step(tape, xs, st);

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  std::vector<double> concat = {x[0], x[1], x[2], h0[0], h0[1]};
  for (int u = 0; u < units; ++u) {
    double zi = cell.b->value[u], zf = cell.b->value[units + u];
    double zg = cell.b->value[2 * units + u], zo = cell.b->value[3 * units + u];
    for (int k = 0; k < in + units; ++k) {
      zi += concat[k] * cell.w->value[k * 4 * units + u];
      zf += concat[k] * cell.w->value[k * 4 * units + units + u];
      zg += concat[k] * cell.w->value[k * 4 * units + 2 * units + u];
      zo += concat[k] * cell.w->value[k * 4 * units + 3 * units + u];
    }
    double c1 = sig(zf) * c0[u] + sig(zi) * std::tanh(zg);
    double h1 = sig(zo) * std::tanh(c1);
    EXPECT_NEAR(st1.c->value[u], c1, 1e-12);
    EXPECT_NEAR(out->value[u], h1, 1e-12);
  }
}

TEST(Lstm, UnrolledGradientMatchesFiniteDifferences) {
  Rng rng(14);
  ParamRegistry<double> reg;
  LstmCell<double> cell(reg, "lstm", 2, 3, rng);
  auto x = randn({1, 2}, rng);
  auto f = [&](Tape<double>& t) {
    auto st = cell.zero_state();
    Var<double> out;
    for (int i = 0; i < 5; ++i) std::tie(out, st) = cell.step(t, x, st);
    return sum(t, out);
  };
  std::vector<Var<double>> inputs = {cell.w, cell.b, x};
  EXPECT_LT(grad_check(f, inputs), 1e-4);
}

TEST(Gru, UnrolledGradientMatchesFiniteDifferences) {
  Rng rng(15);
  ParamRegistry<double> reg;
  GruCell<double> cell(reg, "gru", 2, 3, rng);
  auto x = randn({1, 2}, rng);
  auto f = [&](Tape<double>& t) {
    auto h = cell.zero_state();
    Var<double> out;
    for (int i = 0; i < 5; ++i) std::tie(out, h) = cell.step(t, x, h);
    return sum(t, out);
  };
  std::vector<Var<double>> inputs = {cell.w_zr, cell.b_zr, cell.w_h, cell.b_h, x};
  EXPECT_LT(grad_check(f, inputs), 1e-4);
}

TEST(Tensor, ShapeDataMismatchRejected) {
  EXPECT_THROW(make_var<double>({2, 3}, {1.0, 2.0}), ShapeError);
}
