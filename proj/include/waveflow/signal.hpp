#pragma once

// Sample-domain preprocessing: dequantization, pre/de-emphasis, block
// partitioning with stop labels.

#include "waveflow/rng.hpp"
#include "waveflow/wav.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace waveflow {

constexpr double kPreemphasisCoeff = 0.9;

struct StopLabeledBlocks {
  std::vector<std::vector<double>> blocks;  // [T_dec][K]
  std::vector<int> stop_labels;             // {0,1}, final n_pad entries are 1
  int block_size = 0;
  int n_pad = 0;
  long original_length = 0;  // samples before padding
};

// q in [0, 65535] -> 2*(q + u)/65536 - 1 with u ~ Uniform[0, 1).
inline Waveform dequantize(const std::vector<uint16_t>& pcm, int sample_rate, Rng& rng) {
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(pcm.size());
  for (size_t i = 0; i < pcm.size(); ++i) {
    w.samples[i] = 2.0 * (static_cast<double>(pcm[i]) + rng.uniform()) / 65536.0 - 1.0;
  }
  return w;
}

inline std::vector<uint16_t> pcm_to_levels(const std::vector<int16_t>& pcm) {
  std::vector<uint16_t> q(pcm.size());
  for (size_t i = 0; i < pcm.size(); ++i)
    q[i] = static_cast<uint16_t>(static_cast<int>(pcm[i]) + 32768);
  return q;
}

// y[n] = x[n] - 0.9 x[n-1]
inline Waveform preemphasize(const Waveform& x) {
  Waveform y;
  y.sample_rate = x.sample_rate;
  y.samples.resize(x.samples.size());
  double prev = 0.0;
  for (size_t n = 0; n < x.samples.size(); ++n) {
    y.samples[n] = x.samples[n] - kPreemphasisCoeff * prev;
    prev = x.samples[n];
  }
  return y;
}

// Exact IIR inverse: y[n] = x[n] + 0.9 y[n-1]
inline Waveform deemphasize(const Waveform& x) {
  Waveform y;
  y.sample_rate = x.sample_rate;
  y.samples.resize(x.samples.size());
  double prev = 0.0;
  for (size_t n = 0; n < x.samples.size(); ++n) {
    prev = x.samples[n] + kPreemphasisCoeff * prev;
    y.samples[n] = prev;
  }
  return y;
}

// Zero-pad up to a multiple of K, then append n_pad all-zero blocks labeled 1.
inline StopLabeledBlocks block_partition(const Waveform& w, int block_size, int n_pad) {
  if (w.samples.empty()) throw std::invalid_argument("block_partition: empty waveform");
  if (block_size <= 0 || n_pad < 1) throw std::invalid_argument("block_partition: bad K/n_pad");
  StopLabeledBlocks out;
  out.block_size = block_size;
  out.n_pad = n_pad;
  out.original_length = static_cast<long>(w.samples.size());
  long n_data_blocks = (out.original_length + block_size - 1) / block_size;
  long total = n_data_blocks + n_pad;
  out.blocks.assign(total, std::vector<double>(block_size, 0.0));
  out.stop_labels.assign(total, 0);
  for (long i = 0; i < out.original_length; ++i)
    out.blocks[i / block_size][i % block_size] = w.samples[i];
  for (long t = n_data_blocks; t < total; ++t) out.stop_labels[t] = 1;
  return out;
}

// Inverse of block_partition for label-0 blocks; strips tail padding.
inline Waveform concat_blocks(const StopLabeledBlocks& b, int sample_rate) {
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.reserve(b.original_length);
  for (size_t t = 0; t < b.blocks.size() && static_cast<long>(w.samples.size()) < b.original_length;
       ++t)
    for (double v : b.blocks[t]) {
      if (static_cast<long>(w.samples.size()) >= b.original_length) break;
      w.samples.push_back(v);
    }
  return w;
}

}  // namespace waveflow
