#pragma once

// RIFF/WAVE reader and writer, 16-bit PCM mono only.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace waveflow {

struct Waveform {
  std::vector<double> samples;  // nominally in [-1, 1]
  int sample_rate = 24000;
};

class WavError : public std::runtime_error {
 public:
  explicit WavError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace wavdetail {

inline uint32_t rd_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
inline uint16_t rd_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}
inline void wr_u32(std::vector<uint8_t>& b, uint32_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
  b.push_back((v >> 16) & 0xff);
  b.push_back((v >> 24) & 0xff);
}
inline void wr_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
}

}  // namespace wavdetail

inline std::pair<std::vector<int16_t>, int> load_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw WavError("cannot open " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw WavError("malformed RIFF/WAVE header in " + path);

  int sample_rate = 0, bits = 0, channels = 0, format = 0;
  std::vector<int16_t> pcm;
  size_t pos = 12;
  bool got_fmt = false, got_data = false;
  while (pos + 8 <= buf.size()) {
    uint32_t chunk_size = wavdetail::rd_u32(&buf[pos + 4]);
    if (std::memcmp(&buf[pos], "fmt ", 4) == 0) {
      if (chunk_size < 16 || pos + 8 + 16 > buf.size()) throw WavError("truncated fmt chunk");
      format = wavdetail::rd_u16(&buf[pos + 8]);
      channels = wavdetail::rd_u16(&buf[pos + 10]);
      sample_rate = static_cast<int>(wavdetail::rd_u32(&buf[pos + 12]));
      bits = wavdetail::rd_u16(&buf[pos + 22]);
      got_fmt = true;
    } else if (std::memcmp(&buf[pos], "data", 4) == 0) {
      if (!got_fmt) throw WavError("data chunk before fmt chunk");
      if (format != 1 || bits != 16) throw WavError("unsupported encoding: only 16-bit PCM");
      if (channels != 1) throw WavError("unsupported channel count: mono only");
      size_t n = std::min<size_t>(chunk_size, buf.size() - pos - 8) / 2;
      pcm.resize(n);
      for (size_t i = 0; i < n; ++i)
        pcm[i] = static_cast<int16_t>(wavdetail::rd_u16(&buf[pos + 8 + 2 * i]));
      got_data = true;
      break;
    }
    pos += 8 + chunk_size + (chunk_size & 1);
  }
  if (!got_data) throw WavError("missing data chunk in " + path);
  return {std::move(pcm), sample_rate};
}

inline void save_wav_pcm(const std::vector<int16_t>& pcm, int sample_rate,
                         const std::string& path) {
  std::vector<uint8_t> b;
  b.reserve(44 + pcm.size() * 2);
  uint32_t data_bytes = static_cast<uint32_t>(pcm.size() * 2);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  wavdetail::wr_u32(b, 36 + data_bytes);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  wavdetail::wr_u32(b, 16);
  wavdetail::wr_u16(b, 1);  // PCM
  wavdetail::wr_u16(b, 1);  // mono
  wavdetail::wr_u32(b, static_cast<uint32_t>(sample_rate));
  wavdetail::wr_u32(b, static_cast<uint32_t>(sample_rate * 2));
  wavdetail::wr_u16(b, 2);
  wavdetail::wr_u16(b, 16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  wavdetail::wr_u32(b, data_bytes);
  for (int16_t s : pcm) wavdetail::wr_u16(b, static_cast<uint16_t>(s));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw WavError("cannot write " + path);
  f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!f) throw WavError("write failed: " + path);
}

// Clamp to [-1, 1], symmetric quantization.
inline std::vector<int16_t> quantize_waveform(const Waveform& w) {
  std::vector<int16_t> pcm(w.samples.size());
  for (size_t i = 0; i < w.samples.size(); ++i) {
    double x = std::max(-1.0, std::min(1.0, w.samples[i]));
    pcm[i] = static_cast<int16_t>(std::lround(x * 32767.0));
  }
  return pcm;
}

inline void save_wav(const Waveform& w, const std::string& path) {
  save_wav_pcm(quantize_waveform(w), w.sample_rate, path);
}

}  // namespace waveflow
