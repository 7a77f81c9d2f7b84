#include "waveflow/flow.hpp"
#include "waveflow/gradcheck.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

using namespace waveflow;

namespace {

template <class S>
Var<S> randn(Shape shape, Rng& rng, bool requires_grad = false) {
  std::vector<S> d(numel(shape));
  for (auto& v : d) v = static_cast<S>(rng.normal());
  return make_var<S>(std::move(shape), std::move(d), requires_grad);
}

FlowConfig tiny_config() {
  FlowConfig cfg;
  cfg.block_size = 8;
  cfg.frame_length = 2;
  cfg.stages = 2;
  cfg.steps_per_stage = 2;
  cfg.coupling_channels = 8;
  cfg.position_dim = 4;
  return cfg;
}

// Randomize parameters away from the identity initialization.
template <class S>
void perturb_params(ParamRegistry<S>& reg, Rng& rng, double amount = 0.2) {
  for (auto& [name, p] : reg.ordered())
    for (auto& v : p->value) v += static_cast<S>(amount * rng.normal());
}

// log|det| of the numerically computed Jacobian dz/dy via central differences.
double numerical_logdet(const Flow<double>& flow, const ConditioningFrames<double>& cond,
                        const Var<double>& y, double step = 1e-6) {
  int k = static_cast<int>(y->size());
  Eigen::MatrixXd jac(k, k);
  for (int i = 0; i < k; ++i) {
    auto yp = make_var<double>(y->shape, y->value);
    auto ym = make_var<double>(y->shape, y->value);
    yp->value[i] += step;
    ym->value[i] -= step;
    Tape<double> t;
    t.recording = false;
    auto zp = flow.analysis(t, yp, cond).first;
    auto zm = flow.analysis(t, ym, cond).first;
    for (int j = 0; j < k; ++j) jac(j, i) = (zp->value[j] - zm->value[j]) / (2.0 * step);
  }
  return std::log(std::abs(jac.partialPivLu().determinant()));
}

}  // namespace

TEST(Squeeze, DefinitionAndRoundTrip) {
  Tape<double> tape;
  auto x = make_var<double>({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto sq = reshape(tape, x, {2, 4});
  EXPECT_EQ(sq->value, (std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8}));
  EXPECT_EQ(sq->shape, (Shape{2, 4}));
  auto back = reshape(tape, sq, {4, 2});
  EXPECT_EQ(back->value, x->value);
}

TEST(Squeeze, PaperShapes) {
  // J=96, L=10 at K=960: squeeze halves time, doubles channels
  FlowConfig cfg;
  EXPECT_EQ(cfg.frames(), 96);
  EXPECT_EQ(cfg.stage_frames(1), 48);
  EXPECT_EQ(cfg.stage_channels(1), 20);
}

TEST(Actnorm, InitStateIsIdentity) {
  Rng rng(1);
  ParamRegistry<double> reg;
  auto cfg = tiny_config();
  Flow<double> flow(reg, "flow", cfg, 0, rng);
  Tape<double> tape;
  auto x = randn<double>({4, 2}, rng);
  FlowStepParams<double> p;
  p.actnorm_log_scale = zeros_var<double>({2});
  p.actnorm_bias = zeros_var<double>({2});
  auto [y, ld] = flow.actnorm_analysis(tape, x, p);
  EXPECT_EQ(y->value, x->value);
  EXPECT_DOUBLE_EQ(ld->scalar(), 0.0);
}

TEST(Actnorm, ClosedFormLogdet) {
  Rng rng(2);
  ParamRegistry<double> reg;
  Flow<double> flow(reg, "flow", tiny_config(), 0, rng);
  Tape<double> tape;
  auto x = randn<double>({4, 2}, rng);
  FlowStepParams<double> p;
  p.actnorm_log_scale = make_var<double>({2}, {std::log(2.0), std::log(0.5)});
  p.actnorm_bias = zeros_var<double>({2});
  auto [y, ld] = flow.actnorm_analysis(tape, x, p);
  EXPECT_NEAR(ld->scalar(), 4.0 * (std::log(2.0) + std::log(0.5)), 1e-12);
  auto back = flow.actnorm_synthesis(tape, y, p);
  for (long i = 0; i < x->size(); ++i) EXPECT_NEAR(back->value[i], x->value[i], 1e-6);
}

TEST(Invconv, IdentityAndPermutation) {
  Rng rng(3);
  ParamRegistry<double> reg;
  Flow<double> flow(reg, "flow", tiny_config(), 0, rng);
  Tape<double> tape;
  auto x = randn<double>({5, 2}, rng);

  FlowStepParams<double> p;
  p.invconv_w = make_var<double>({2, 2}, {1, 0, 0, 1});
  auto [y, ld] = flow.invconv_analysis(tape, x, p);
  EXPECT_EQ(y->value, x->value);
  EXPECT_DOUBLE_EQ(ld->scalar(), 0.0);

  p.invconv_w = make_var<double>({2, 2}, {0, 1, 1, 0});
  auto [y2, ld2] = flow.invconv_analysis(tape, x, p);
  EXPECT_NEAR(ld2->scalar(), 0.0, 1e-12);  // |det| = 1
  for (int t = 0; t < 5; ++t) {
    EXPECT_DOUBLE_EQ(y2->value[2 * t], x->value[2 * t + 1]);
    EXPECT_DOUBLE_EQ(y2->value[2 * t + 1], x->value[2 * t]);
  }
}

TEST(Invconv, OrthogonalInitHasZeroLogdet) {
  Rng rng(4);
  ParamRegistry<double> reg;
  auto w = reg.orthogonal("w", 6, rng);
  Tape<double> tape;
  EXPECT_NEAR(logdet(tape, w)->scalar(), 0.0, 1e-10);
}

TEST(Invconv, SingularRejected) {
  Rng rng(5);
  ParamRegistry<double> reg;
  Flow<double> flow(reg, "flow", tiny_config(), 0, rng);
  Tape<double> tape;
  FlowStepParams<double> p;
  p.invconv_w = zeros_var<double>({2, 2});
  auto x = randn<double>({3, 2}, rng);
  EXPECT_THROW(flow.invconv_analysis(tape, x, p), NumericError);
}

TEST(Coupling, ZeroInitLogdetClosedForm) {
  Rng rng(6);
  ParamRegistry<double> reg;
  auto cfg = tiny_config();
  cfg.position_dim = 0;
  Flow<double> flow(reg, "flow", cfg, 0, rng);
  // fresh registry state: conv2 zero-init, so raw_s = 0, shift = 0
  Tape<double> tape;
  auto y = randn<double>({1, cfg.block_size}, rng);
  ConditioningFrames<double> cond;
  cond.per_stage.assign(cfg.stages, nullptr);
  auto [z, ld] = flow.analysis(tape, y, cond);
  double s = 1.0 / (1.0 + std::exp(-2.0));
  // per coupling: T * (C/2) * log(sigmoid(2)); T*C/2 == K/2 at every stage
  double expected = cfg.stages * cfg.steps_per_stage * (cfg.block_size / 2.0) * std::log(s);
  EXPECT_NEAR(ld->scalar(), expected, 1e-9);
}

TEST(Coupling, PassthroughHalfUnchangedAndInverse) {
  Rng rng(7);
  ParamRegistry<double> reg;
  auto cfg = tiny_config();
  Flow<double> flow(reg, "flow", cfg, 3, rng);
  Tape<double> tape;
  auto x = randn<double>({4, 2}, rng);
  auto cond = randn<double>({4, 3 + cfg.position_dim}, rng);
  FlowStepParams<double> p;
  p.coupling_conv0 = Conv1dLayer<double>(reg, "c0", 3, 1 + 3 + cfg.position_dim, 8, rng);
  p.coupling_conv1 = Conv1dLayer<double>(reg, "c1", 1, 8, 8, rng);
  p.coupling_conv2 = Conv1dLayer<double>(reg, "c2", 3, 8, 2, rng);  // random, not zero-init
  auto [y, ld] = flow.coupling_analysis(tape, x, cond, p);
  (void)ld;
  for (int t = 0; t < 4; ++t) EXPECT_DOUBLE_EQ(y->value[2 * t], x->value[2 * t]);
  auto back = flow.coupling_synthesis(tape, y, cond, p);
  for (long i = 0; i < x->size(); ++i) EXPECT_NEAR(back->value[i], x->value[i], 1e-5);
}

TEST(Flow, RoundTripTinyConfig) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    ParamRegistry<double> reg;
    auto cfg = tiny_config();
    Flow<double> flow(reg, "flow", cfg, 3, rng);
    perturb_params(reg, rng);
    Tape<double> tape;
    tape.recording = false;
    auto c = randn<double>({1, 3}, rng);
    auto cond = upsample_conditioning(tape, c, cfg);
    auto y = randn<double>({1, cfg.block_size}, rng);
    auto [z, ld] = flow.analysis(tape, y, cond);
    auto back = flow.synthesis(tape, z, cond);
    for (long i = 0; i < y->size(); ++i) EXPECT_NEAR(back->value[i], y->value[i], 1e-9);
    // analysis of synthesis recovers z as well
    auto z2 = flow.analysis(tape, back, cond).first;
    for (long i = 0; i < z->size(); ++i) EXPECT_NEAR(z2->value[i], z->value[i], 1e-9);
  }
}

TEST(Flow, ConditioningContentDoesNotAffectInvertibility) {
  Rng rng(20);
  ParamRegistry<double> reg;
  auto cfg = tiny_config();
  Flow<double> flow(reg, "flow", cfg, 3, rng);
  perturb_params(reg, rng);
  Tape<double> tape;
  tape.recording = false;
  auto y = randn<double>({1, cfg.block_size}, rng);
  for (int trial = 0; trial < 5; ++trial) {
    auto cond = upsample_conditioning(tape, randn<double>({1, 3}, rng), cfg);
    auto [z, ld] = flow.analysis(tape, y, cond);
    auto back = flow.synthesis(tape, z, cond);
    for (long i = 0; i < y->size(); ++i) EXPECT_NEAR(back->value[i], y->value[i], 1e-9);
  }
}

TEST(Flow, LogdetMatchesNumericalJacobian) {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed + 30);
    ParamRegistry<double> reg;
    auto cfg = tiny_config();
    Flow<double> flow(reg, "flow", cfg, 2, rng);
    perturb_params(reg, rng);
    Tape<double> tape;
    tape.recording = false;
    auto cond = upsample_conditioning(tape, randn<double>({1, 2}, rng), cfg);
    auto y = randn<double>({1, cfg.block_size}, rng);
    auto [z, ld] = flow.analysis(tape, y, cond);
    double numeric = numerical_logdet(flow, cond, y);
    double denom = std::max(std::abs(numeric), 1.0);
    EXPECT_LT(std::abs(ld->scalar() - numeric) / denom, 1e-5) << "seed " << seed;
  }
}

TEST(Flow, DimensionConservation) {
  FlowConfig cfg;  // default K=960
  long k = cfg.block_size;
  for (int m = 0; m < cfg.stages; ++m)
    EXPECT_EQ(static_cast<long>(cfg.stage_frames(m)) * cfg.stage_channels(m), k);
}

TEST(Flow, NllGradientMatchesFiniteDifferences) {
  Rng rng(40);
  ParamRegistry<double> reg;
  auto cfg = tiny_config();
  cfg.steps_per_stage = 1;  // keep finite differencing cheap
  Flow<double> flow(reg, "flow", cfg, 2, rng);
  perturb_params(reg, rng, 0.1);
  auto c = randn<double>({1, 2}, rng, true);
  auto y = randn<double>({1, cfg.block_size}, rng, true);
  auto f = [&](Tape<double>& t) {
    auto cond = upsample_conditioning(t, c, cfg);
    return flow.nll(t, y, cond);
  };
  std::vector<Var<double>> inputs = {y, c};
  for (auto& [name, p] : reg.ordered()) inputs.push_back(p);
  EXPECT_LT(grad_check(f, inputs), 1e-4);
}

TEST(Flow, IdentityCouplingNllMatchesGaussianEntropy) {
  Rng rng(50);
  ParamRegistry<double> reg;
  auto cfg = tiny_config();
  cfg.identity_couplings = true;
  cfg.position_dim = 0;
  Flow<double> flow(reg, "flow", cfg, 0, rng);
  // actnorm identity, invconv orthogonal: |logdet| = 0, z = rotation of y
  ConditioningFrames<double> cond;
  cond.per_stage.assign(cfg.stages, nullptr);
  Tape<double> tape;
  tape.recording = false;
  double acc = 0.0;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) {
    auto y = randn<double>({1, cfg.block_size}, rng);
    acc += flow.nll(tape, y, cond)->scalar() / cfg.block_size;
  }
  double expected = 0.5 * std::log(2.0 * M_PI) + 0.5;
  EXPECT_NEAR(acc / trials, expected, 0.01 * expected);
}

TEST(Flow, SampleLatentTemperature) {
  Rng rng(60);
  ParamRegistry<double> reg;
  auto cfg = tiny_config();
  Flow<double> flow(reg, "flow", cfg, 0, rng);

  auto z0 = flow.sample_latent(rng, 0.0);
  for (double v : z0) EXPECT_DOUBLE_EQ(v, 0.0);

  for (double temp : {0.5, 0.7, 1.0}) {
    double sum = 0.0, sum_sq = 0.0;
    long n = 100000 / cfg.block_size * cfg.block_size;
    long count = 0;
    while (count < 100000) {
      auto z = flow.sample_latent(rng, temp);
      for (double v : z) {
        sum += v;
        sum_sq += v * v;
      }
      count += cfg.block_size;
    }
    (void)n;
    double var = sum_sq / count - (sum / count) * (sum / count);
    EXPECT_NEAR(var, temp * temp, 0.03 * temp * temp) << "T=" << temp;
    if (temp == 1.0) EXPECT_NEAR(sum / count, 0.0, 0.01);
  }

  EXPECT_THROW(flow.sample_latent(rng, -0.1), std::invalid_argument);
}

TEST(Flow, ZeroLatentIsFixedPointAtInit) {
  Rng rng(70);
  ParamRegistry<double> reg;
  auto cfg = tiny_config();
  Flow<double> flow(reg, "flow", cfg, 2, rng);  // identity init, couplings zero-init
  Tape<double> tape;
  tape.recording = false;
  auto cond = upsample_conditioning(tape, zeros_var<double>({1, 2}), cfg);
  auto z = zeros_var<double>({1, cfg.block_size});
  auto y = flow.synthesis(tape, z, cond);
  for (double v : y->value) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Flow, SynthesisDeterministic) {
  Rng rng(80);
  ParamRegistry<double> reg;
  auto cfg = tiny_config();
  Flow<double> flow(reg, "flow", cfg, 2, rng);
  perturb_params(reg, rng);
  Tape<double> tape;
  tape.recording = false;
  auto cond = upsample_conditioning(tape, randn<double>({1, 2}, rng), cfg);
  auto z = randn<double>({1, cfg.block_size}, rng);
  auto y1 = flow.synthesis(tape, z, cond);
  auto y2 = flow.synthesis(tape, z, cond);
  EXPECT_EQ(y1->value, y2->value);
}

TEST(Conditioning, RowCountsPerStage) {
  auto cfg = tiny_config();
  Tape<double> tape;
  tape.recording = false;
  auto c = zeros_var<double>({1, 3});
  auto cond = upsample_conditioning(tape, c, cfg);
  for (int m = 0; m < cfg.stages; ++m)
    EXPECT_EQ(cond.per_stage[m]->shape[0], cfg.frames() >> m);
}

TEST(Conditioning, DistinctPositionsDistinctEmbeddings) {
  auto emb = flowdetail::position_embeddings<double>(96, 64);
  double min_dist = 1e9;
  for (int a = 0; a < 96; ++a)
    for (int b = a + 1; b < 96; ++b) {
      double d = 0;
      for (int k = 0; k < 64; ++k) {
        double diff = emb->value[a * 64 + k] - emb->value[b * 64 + k];
        d += diff * diff;
      }
      min_dist = std::min(min_dist, std::sqrt(d));
    }
  EXPECT_GT(min_dist, 0.0);
}

TEST(Conditioning, NoPositionEmbeddingsMeansReplication) {
  auto cfg = tiny_config();
  cfg.position_dim = 0;
  Tape<double> tape;
  tape.recording = false;
  Rng rng(90);
  auto c = randn<double>({1, 3}, rng);
  auto cond = upsample_conditioning(tape, c, cfg);
  auto& s0 = cond.per_stage[0];
  for (int row = 0; row < s0->shape[0]; ++row)
    for (int k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(s0->value[row * 3 + k], c->value[k]);
}

TEST(Conditioning, StageAveragingContract) {
  auto cfg = tiny_config();
  cfg.position_dim = 0;
  Tape<double> tape;
  // feature part of stage m+1 equals adjacent-pair averages of stage m
  Rng rng(91);
  // replicated c is constant, so exercise the averaging path via a nonconstant
  // matrix directly
  auto x = randn<double>({4, 3}, rng);
  auto avg = pair_average_rows(tape, x);
  for (int t = 0; t < 2; ++t)
    for (int k = 0; k < 3; ++k)
      EXPECT_DOUBLE_EQ(avg->value[t * 3 + k],
                       0.5 * (x->value[2 * t * 3 + k] + x->value[(2 * t + 1) * 3 + k]));
}
