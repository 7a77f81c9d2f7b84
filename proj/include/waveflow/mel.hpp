#pragma once

// 80-channel log-mel front end (HTK mel scale, triangular filters spanning
// 0 Hz to Nyquist) and orthonormal DCT-II MFCCs keeping coefficients 1..13.

#include "waveflow/stft.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace waveflow {

constexpr int kMelChannels = 80;
constexpr int kMfccCoeffs = 13;
constexpr double kLogMelFloor = 1e-5;

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

struct LogMelSpectrogram {
  std::vector<std::vector<double>> frames;  // [n_frames][n_mels]
  StftGeometry geometry;
  int n_mels = kMelChannels;
};

struct MfccSequence {
  std::vector<std::vector<double>> frames;  // [n_frames][13]
};

// Triangular filterbank as [n_mels][n_bins] weights.
inline std::vector<std::vector<double>> mel_filterbank(int n_mels, int n_bins, int fft_size,
                                                       int sample_rate) {
  double nyquist = sample_rate / 2.0;
  double mel_lo = hz_to_mel(0.0), mel_hi = hz_to_mel(nyquist);
  std::vector<double> centers(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    centers[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
  std::vector<std::vector<double>> fb(n_mels, std::vector<double>(n_bins, 0.0));
  for (int m = 0; m < n_mels; ++m) {
    double lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
    for (int b = 0; b < n_bins; ++b) {
      double f = static_cast<double>(b) * sample_rate / fft_size;
      if (f > lo && f < mid)
        fb[m][b] = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi)
        fb[m][b] = (hi - f) / (hi - mid);
    }
  }
  return fb;
}

inline LogMelSpectrogram log_mel(const Waveform& w,
                                 StftGeometry geo = {},
                                 int n_mels = kMelChannels) {
  geo.sample_rate = w.sample_rate;
  auto mag = magnitude(stft(w.samples, geo));
  auto fb = mel_filterbank(n_mels, geo.n_bins(), geo.fft_size(), geo.sample_rate);
  LogMelSpectrogram out;
  out.geometry = geo;
  out.n_mels = n_mels;
  out.frames.resize(mag.frames.size());
  for (size_t f = 0; f < mag.frames.size(); ++f) {
    out.frames[f].resize(n_mels);
    for (int m = 0; m < n_mels; ++m) {
      double e = 0.0;
      for (size_t b = 0; b < mag.frames[f].size(); ++b) e += fb[m][b] * mag.frames[f][b];
      out.frames[f][m] = std::log(std::max(e, kLogMelFloor));
    }
  }
  return out;
}

// Orthonormal DCT-II over the mel axis; c0 (overall energy) excluded.
inline MfccSequence mfcc(const LogMelSpectrogram& mel) {
  int n = mel.n_mels;
  if (n != kMelChannels)
    throw std::invalid_argument("mfcc: expected " + std::to_string(kMelChannels) + " channels");
  MfccSequence out;
  out.frames.resize(mel.frames.size());
  for (size_t f = 0; f < mel.frames.size(); ++f) {
    out.frames[f].resize(kMfccCoeffs);
    for (int k = 1; k <= kMfccCoeffs; ++k) {
      double s = 0.0;
      for (int i = 0; i < n; ++i)
        s += mel.frames[f][i] * std::cos(M_PI * k * (i + 0.5) / n);
      out.frames[f][k - 1] = s * std::sqrt(2.0 / n);
    }
  }
  return out;
}

}  // namespace waveflow
