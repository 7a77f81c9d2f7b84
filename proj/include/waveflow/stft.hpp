#pragma once

// STFT / inverse STFT with a Hann window. FFT length is the next power of two
// at or above the window length.

#include "waveflow/fft.hpp"
#include "waveflow/wav.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace waveflow {

struct StftGeometry {
  int sample_rate = 24000;
  double window_ms = 50.0;
  double hop_ms = 12.5;

  int window_length() const {
    return static_cast<int>(std::lround(window_ms * sample_rate / 1000.0));
  }
  int hop_length() const { return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0)); }
  int fft_size() const { return static_cast<int>(next_pow2(window_length())); }
  int n_bins() const { return fft_size() / 2 + 1; }
  int n_frames(long n_samples) const {
    long w = window_length(), h = hop_length();
    if (n_samples < w) throw std::invalid_argument("stft: input shorter than one window");
    return static_cast<int>((n_samples - w) / h + 1);
  }
};

inline std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
  return w;
}

struct ComplexSpectrogram {
  std::vector<std::vector<std::complex<double>>> frames;  // [n_frames][n_bins]
  StftGeometry geometry;
};

struct MagnitudeSpectrogram {
  std::vector<std::vector<double>> frames;  // [n_frames][n_bins]
  StftGeometry geometry;
};

inline ComplexSpectrogram stft(const std::vector<double>& samples, const StftGeometry& geo) {
  int win = geo.window_length(), hop = geo.hop_length(), nfft = geo.fft_size();
  int frames = geo.n_frames(static_cast<long>(samples.size()));
  auto window = hann_window(win);
  ComplexSpectrogram out;
  out.geometry = geo;
  out.frames.resize(frames);
  std::vector<double> buf(win);
  for (int f = 0; f < frames; ++f) {
    long start = static_cast<long>(f) * hop;
    for (int i = 0; i < win; ++i) buf[i] = samples[start + i] * window[i];
    out.frames[f] = rfft(buf, static_cast<size_t>(nfft));
  }
  return out;
}

inline MagnitudeSpectrogram magnitude(const ComplexSpectrogram& s) {
  MagnitudeSpectrogram out;
  out.geometry = s.geometry;
  out.frames.resize(s.frames.size());
  for (size_t f = 0; f < s.frames.size(); ++f) {
    out.frames[f].resize(s.frames[f].size());
    for (size_t b = 0; b < s.frames[f].size(); ++b) out.frames[f][b] = std::abs(s.frames[f][b]);
  }
  return out;
}

// Weighted overlap-add inverse with window-sum normalization.
inline std::vector<double> istft(const ComplexSpectrogram& s, long n_samples) {
  const auto& geo = s.geometry;
  int win = geo.window_length(), hop = geo.hop_length(), nfft = geo.fft_size();
  auto window = hann_window(win);
  std::vector<double> out(n_samples, 0.0), wsum(n_samples, 0.0);
  for (size_t f = 0; f < s.frames.size(); ++f) {
    auto seg = irfft(s.frames[f], static_cast<size_t>(nfft));
    long start = static_cast<long>(f) * hop;
    for (int i = 0; i < win && start + i < n_samples; ++i) {
      out[start + i] += seg[i] * window[i];
      wsum[start + i] += window[i] * window[i];
    }
  }
  for (long i = 0; i < n_samples; ++i)
    if (wsum[i] > 1e-10) out[i] /= wsum[i];
  return out;
}

}  // namespace waveflow
