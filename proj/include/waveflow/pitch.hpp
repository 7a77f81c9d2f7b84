#pragma once

// Autocorrelation pitch tracker: per-frame normalized autocorrelation peak in
// [50, 500] Hz, unvoiced below 0.3, parabolic peak refinement.

#include "waveflow/wav.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace waveflow {

struct PitchConfig {
  double frame_ms = 50.0;
  double hop_ms = 12.5;
  double f0_min = 50.0;
  double f0_max = 500.0;
  double voicing_threshold = 0.3;
};

inline std::vector<double> pitch_track(const Waveform& w, const PitchConfig& cfg = {}) {
  if (w.sample_rate < 8000) throw std::invalid_argument("pitch_track: sample rate below 8 kHz");
  int frame = static_cast<int>(std::lround(cfg.frame_ms * w.sample_rate / 1000.0));
  int hop = static_cast<int>(std::lround(cfg.hop_ms * w.sample_rate / 1000.0));
  int lag_min = static_cast<int>(std::floor(w.sample_rate / cfg.f0_max));
  int lag_max = static_cast<int>(std::ceil(w.sample_rate / cfg.f0_min));
  std::vector<double> f0;
  if (static_cast<long>(w.samples.size()) < frame) return f0;

  for (long start = 0; start + frame <= static_cast<long>(w.samples.size()); start += hop) {
    const double* x = w.samples.data() + start;
    double energy = 0.0;
    for (int i = 0; i < frame; ++i) energy += x[i] * x[i];
    if (energy < 1e-10) {
      f0.push_back(0.0);
      continue;
    }
    int best_lag = 0;
    double best_r = 0.0;
    std::vector<double> rbuf(lag_max + 1, 0.0);
    int hi = std::min(lag_max, frame - 1);
    for (int lag = lag_min; lag <= hi; ++lag) {
      double num = 0.0, e0 = 0.0, e1 = 0.0;
      int n = frame - lag;
      for (int i = 0; i < n; ++i) {
        num += x[i] * x[i + lag];
        e0 += x[i] * x[i];
        e1 += x[i + lag] * x[i + lag];
      }
      double r = (e0 > 0 && e1 > 0) ? num / std::sqrt(e0 * e1) : 0.0;
      rbuf[lag] = r;
      if (r > best_r) {
        best_r = r;
        best_lag = lag;
      }
    }
    if (best_lag == 0 || best_r < cfg.voicing_threshold) {
      f0.push_back(0.0);
      continue;
    }
    double lag = best_lag;
    if (best_lag > lag_min && best_lag < hi) {
      double rm = rbuf[best_lag - 1], r0 = rbuf[best_lag], rp = rbuf[best_lag + 1];
      double denom = rm - 2.0 * r0 + rp;
      if (std::abs(denom) > 1e-12) lag += 0.5 * (rm - rp) / denom;
    }
    f0.push_back(w.sample_rate / lag);
  }
  return f0;
}

}  // namespace waveflow
