#pragma once

// Griffin-Lim phase reconstruction. Plain alternating projections (no
// momentum), so the reconstruction objective is non-increasing.

#include "waveflow/rng.hpp"
#include "waveflow/stft.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace waveflow {

inline double spectral_convergence_error(const MagnitudeSpectrogram& target,
                                         const std::vector<double>& samples) {
  auto got = magnitude(stft(samples, target.geometry));
  double s = 0.0;
  size_t frames = std::min(got.frames.size(), target.frames.size());
  for (size_t f = 0; f < frames; ++f)
    for (size_t b = 0; b < target.frames[f].size(); ++b) {
      double d = got.frames[f][b] - target.frames[f][b];
      s += d * d;
    }
  return std::sqrt(s);
}

// iteration_hook(iteration, error) is called after each iteration when set.
inline Waveform griffin_lim(const MagnitudeSpectrogram& mag, int iterations, Rng& rng,
                            const std::function<void(int, double)>& iteration_hook = {}) {
  for (const auto& frame : mag.frames)
    for (double v : frame)
      if (v < 0.0) throw std::invalid_argument("griffin_lim: negative magnitude");
  const auto& geo = mag.geometry;
  long n_samples =
      static_cast<long>(mag.frames.size() - 1) * geo.hop_length() + geo.window_length();

  ComplexSpectrogram spec;
  spec.geometry = geo;
  spec.frames.resize(mag.frames.size());
  for (size_t f = 0; f < mag.frames.size(); ++f) {
    spec.frames[f].resize(mag.frames[f].size());
    for (size_t b = 0; b < mag.frames[f].size(); ++b) {
      double phi = rng.uniform(-M_PI, M_PI);
      spec.frames[f][b] = std::polar(mag.frames[f][b], phi);
    }
  }

  std::vector<double> x = istft(spec, n_samples);
  for (int it = 1; it <= iterations; ++it) {
    auto s = stft(x, geo);
    for (size_t f = 0; f < s.frames.size() && f < mag.frames.size(); ++f)
      for (size_t b = 0; b < s.frames[f].size(); ++b) {
        double a = std::abs(s.frames[f][b]);
        spec.frames[f][b] =
            a > 1e-12 ? s.frames[f][b] * (mag.frames[f][b] / a) : std::complex<double>(mag.frames[f][b], 0.0);
      }
    x = istft(spec, n_samples);
    if (iteration_hook) iteration_hook(it, spectral_convergence_error(mag, x));
  }
  Waveform out;
  out.sample_rate = geo.sample_rate;
  out.samples = std::move(x);
  return out;
}

}  // namespace waveflow
