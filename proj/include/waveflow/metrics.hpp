#pragma once

// DTW alignment and the MCD/MSD distortion metrics.

#include "waveflow/mel.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace waveflow {

struct DtwResult {
  double cost = 0.0;
  std::vector<std::pair<int, int>> path;  // (i, j), monotone, anchored both ends
};

inline double frame_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t k = 0; k < a.size(); ++k) {
    double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

// Steps {(1,0),(0,1),(1,1)}; ties broken preferring diagonal, then (1,0).
inline DtwResult dtw(const std::vector<std::vector<double>>& a,
                     const std::vector<std::vector<double>>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("dtw: empty input");
  int n = static_cast<int>(a.size()), m = static_cast<int>(b.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> acc(n, std::vector<double>(m, inf));
  std::vector<std::vector<int8_t>> from(n, std::vector<int8_t>(m, -1));  // 0=diag 1=(1,0) 2=(0,1)
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      double d = frame_distance(a[i], b[j]);
      if (i == 0 && j == 0) {
        acc[i][j] = d;
        continue;
      }
      double best = inf;
      int8_t arg = -1;
      if (i > 0 && j > 0 && acc[i - 1][j - 1] < best) {
        best = acc[i - 1][j - 1];
        arg = 0;
      }
      if (i > 0 && acc[i - 1][j] < best) {
        best = acc[i - 1][j];
        arg = 1;
      }
      if (j > 0 && acc[i][j - 1] < best) {
        best = acc[i][j - 1];
        arg = 2;
      }
      acc[i][j] = best + d;
      from[i][j] = arg;
    }
  DtwResult r;
  r.cost = acc[n - 1][m - 1];
  int i = n - 1, j = m - 1;
  r.path.push_back({i, j});
  while (i != 0 || j != 0) {
    switch (from[i][j]) {
      case 0: --i; --j; break;
      case 1: --i; break;
      default: --j; break;
    }
    r.path.push_back({i, j});
  }
  std::reverse(r.path.begin(), r.path.end());
  return r;
}

// Mean over the DTW path of per-pair RMSE across feature coefficients.
inline double aligned_feature_distortion(const std::vector<std::vector<double>>& ref,
                                         const std::vector<std::vector<double>>& syn) {
  auto r = dtw(ref, syn);
  double dim = static_cast<double>(ref[0].size());
  double s = 0.0;
  for (auto [i, j] : r.path) s += frame_distance(ref[i], syn[j]) / std::sqrt(dim);
  return s / static_cast<double>(r.path.size());
}

inline double mcd(const Waveform& reference, const Waveform& synthesized) {
  auto fr = mfcc(log_mel(reference)).frames;
  auto fs = mfcc(log_mel(synthesized)).frames;
  return aligned_feature_distortion(fr, fs);
}

inline double msd(const Waveform& reference, const Waveform& synthesized) {
  auto fr = log_mel(reference).frames;
  auto fs = log_mel(synthesized).frames;
  return aligned_feature_distortion(fr, fs);
}

}  // namespace waveflow
