#pragma once

// Deterministic RNG wrapper. Distributions are implemented here rather than
// via std:: so sampled streams are stable across standard library versions.

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace waveflow {

class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed), base_seed_(seed) {}

  uint64_t next_u64() {
    uint64_t hi = engine_();
    uint64_t lo = engine_();
    return (hi << 32) | lo;
  }

  // [0, 1)
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; one value per call, cached pair.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  int uniform_int(int lo, int hi) {  // inclusive range
    return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  // Derive an independent stream, e.g. per corpus item.
  Rng fork(uint64_t salt) const {
    uint64_t h = 0x9e3779b97f4a7c15ULL ^ salt;
    h ^= base_seed_ + (h << 6) + (h >> 2);
    return Rng(h * 0x2545f4914f6cdd1dULL + base_seed_);
  }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_ << " " << base_seed_ << " " << (has_spare_ ? 1 : 0) << " " << spare_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    int flag = 0;
    is >> engine_ >> base_seed_ >> flag >> spare_;
    has_spare_ = flag != 0;
  }

 private:
  explicit Rng(uint64_t seed, int) : engine_(seed) {}
  std::mt19937 engine_;
  uint64_t base_seed_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace waveflow
