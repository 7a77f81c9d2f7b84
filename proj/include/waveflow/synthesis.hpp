#pragma once

// Free-running generation: decoder loop with latent sampling through the
// inverse flow, stop-token termination, and the generation-speed benchmark.

#include "waveflow/griffin_lim.hpp"
#include "waveflow/model.hpp"
#include "waveflow/signal.hpp"
#include "waveflow/vocoder.hpp"

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

namespace waveflow {

struct SynthesisConfig {
  double temperature = 0.7;
  double stop_threshold = 0.5;  // > 1 disables stop-token termination
  long max_steps = 400;
  uint64_t seed = 0;

  void validate() const {
    if (temperature < 0) throw std::invalid_argument("synthesis config: negative temperature");
    if (max_steps < 1) throw std::invalid_argument("synthesis config: max_steps must be >= 1");
  }
};

struct SynthesisResult {
  Waveform waveform;
  long n_steps = 0;
  bool stopped_by_token = false;
};

// Encode once, then loop decoder_step -> sample_latent -> flow synthesis,
// feeding back the final K/R samples of each emitted block. The stop step's
// block is kept; de-emphasis runs once iff the model trained pre-emphasized.
template <class S>
inline SynthesisResult synthesize(const WaveTacotron<S>& model, const std::vector<int>& tokens,
                                  const SynthesisConfig& cfg) {
  cfg.validate();
  if (model.config().unconditional)
    throw std::invalid_argument("synthesize: model is unconditional");
  const auto& mc = model.config();
  Rng rng(cfg.seed);
  Tape<S> tape;
  tape.recording = false;

  auto memory = model.encoder()(tape, tokens);
  auto state = model.decoder().initial_state(static_cast<int>(tokens.size()));
  int k = mc.block_size();
  int tail_len = mc.block_base;

  SynthesisResult out;
  std::vector<double> samples;
  for (long t = 0; t < cfg.max_steps; ++t) {
    auto [c_t, next] = model.decoder().step(tape, state, memory, false, rng);
    state = next;
    auto cond = model.upsample(tape, c_t);
    auto z = make_var<S>({1, k}, model.flow().sample_latent(rng, cfg.temperature));
    auto y = model.flow().synthesis(tape, z, cond);
    for (long i = 0; i < y->size(); ++i) samples.push_back(static_cast<double>(y->value[i]));
    std::vector<S> tail(y->value.end() - tail_len, y->value.end());
    state.prev_tail = make_var<S>({1, tail_len}, std::move(tail));
    out.n_steps = t + 1;
    auto stop = model.decoder().stop_token(tape, c_t);
    if (static_cast<double>(stop->value[0]) > cfg.stop_threshold) {
      out.stopped_by_token = true;
      break;
    }
  }
  out.waveform.sample_rate = mc.sample_rate;
  out.waveform.samples = std::move(samples);
  if (mc.use_preemphasis) out.waveform = deemphasize(out.waveform);
  return out;
}

struct BenchRow {
  std::string variant;
  int r = 0;
  double mean_s = 0.0;
  double std_s = 0.0;
  int trials = 0;
};

inline std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string csv = "variant,R,mean_s,std_s,trials\n";
  for (const auto& row : rows)
    csv += row.variant + "," + std::to_string(row.r) + "," + std::to_string(row.mean_s) + "," +
           std::to_string(row.std_s) + "," + std::to_string(row.trials) + "\n";
  return csv;
}

// Wall time for fixed-duration synthesis, stop token disabled so every
// variant emits the same number of output samples. One warm-up run excluded.
template <class S>
inline BenchRow bench_one(const std::string& variant, const WaveTacotron<S>& model,
                          const std::vector<int>& tokens, int trials, double duration_s,
                          uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("bench: trials must be >= 1");
  const auto& mc = model.config();
  long n_samples = static_cast<long>(std::llround(duration_s * mc.sample_rate));
  SynthesisConfig cfg;
  cfg.temperature = mc.temperature;
  cfg.stop_threshold = 2.0;
  cfg.max_steps = (n_samples + mc.block_size() - 1) / mc.block_size();
  cfg.seed = seed;

  synthesize(model, tokens, cfg);  // warm-up
  std::vector<double> times;
  for (int i = 0; i < trials; ++i) {
    cfg.seed = seed + 1 + i;
    auto t0 = std::chrono::steady_clock::now();
    synthesize(model, tokens, cfg);
    auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  BenchRow row;
  row.variant = variant;
  row.r = mc.r;
  row.trials = trials;
  for (double t : times) row.mean_s += t;
  row.mean_s /= trials;
  for (double t : times) row.std_s += (t - row.mean_s) * (t - row.mean_s);
  row.std_s = trials > 1 ? std::sqrt(row.std_s / (trials - 1)) : 0.0;
  return row;
}

// Spectrogram-inversion baselines behind one interface so the benchmark can
// time them interchangeably. Flowcoder path: one inverse-flow pass.
template <class S>
inline Waveform vocode_pipeline(const Vocoder<S>& voc, const LogMelSpectrogram& mel,
                                double temperature, Rng& rng) {
  return voc.vocode(mel, temperature, rng);
}

// Griffin-Lim path: 100-iteration default phase reconstruction.
inline Waveform vocode_pipeline(const MagnitudeSpectrogram& mag, Rng& rng, int iterations = 100) {
  return griffin_lim(mag, iterations, rng);
}

}  // namespace waveflow
