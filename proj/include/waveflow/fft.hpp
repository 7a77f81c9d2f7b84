#pragma once

// Iterative radix-2 FFT. All transform sizes in this project are powers of
// two, so no general-length machinery is needed.

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace waveflow {

inline bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  if (!is_pow2(n)) throw std::invalid_argument("fft: size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * M_PI / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        auto u = a[i + k];
        auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= static_cast<double>(n);
}

// Real input -> first n/2+1 bins.
inline std::vector<std::complex<double>> rfft(const std::vector<double>& x, size_t n) {
  std::vector<std::complex<double>> a(n);
  for (size_t i = 0; i < x.size() && i < n; ++i) a[i] = x[i];
  fft_inplace(a, false);
  a.resize(n / 2 + 1);
  return a;
}

// Inverse of rfft; returns n real samples.
inline std::vector<double> irfft(const std::vector<std::complex<double>>& bins, size_t n) {
  if (bins.size() != n / 2 + 1) throw std::invalid_argument("irfft: bin count mismatch");
  std::vector<std::complex<double>> a(n);
  for (size_t i = 0; i < bins.size(); ++i) a[i] = bins[i];
  for (size_t i = 1; i < n / 2; ++i) a[n - i] = std::conj(bins[i]);
  fft_inplace(a, true);
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = a[i].real();
  return out;
}

}  // namespace waveflow
