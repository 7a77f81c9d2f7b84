#pragma once

// Single-file checkpoint: magic, JSON manifest, float32 blob. The manifest
// carries step counter, optimizer scalars, rng state and the full run config;
// parameter and moment arrays live in the blob as little-endian float32.

#include "waveflow/adam.hpp"
#include "waveflow/params.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace waveflow {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr char kCheckpointMagic[8] = {'W', 'F', 'C', 'K', 'P', 'T', '0', '1'};

inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace ckptdetail {

inline void put_f32(std::vector<float>& blob, const std::vector<float>& v) {
  blob.insert(blob.end(), v.begin(), v.end());
}
inline void put_f32(std::vector<float>& blob, const std::vector<double>& v) {
  for (double x : v) blob.push_back(static_cast<float>(x));
}
template <class S>
inline std::vector<S> take_f32(const std::vector<float>& blob, size_t offset, size_t n) {
  if (offset + n > blob.size()) throw CheckpointError("checkpoint blob truncated");
  std::vector<S> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = static_cast<S>(blob[offset + i]);
  return out;
}

}  // namespace ckptdetail

template <class S>
inline void save_checkpoint(const std::string& path, const ParamRegistry<S>& params,
                            const AdamState<S>& opt, long step, const std::string& rng_state,
                            const nlohmann::json& config) {
  nlohmann::json arrays = nlohmann::json::object();
  std::vector<float> blob;
  auto add_array = [&](const std::string& key, const Shape& shape, const auto& data) {
    arrays[key] = {{"shape", shape}, {"offset", blob.size()}, {"size", data.size()}};
    ckptdetail::put_f32(blob, data);
  };
  // json objects iterate sorted by key, so manifest bytes are order-stable;
  // lay the blob out in the same sorted order
  std::map<std::string, Var<S>> sorted;
  for (const auto& [name, p] : params.ordered()) sorted["param:" + name] = p;
  for (const auto& [key, p] : sorted) add_array(key, p->shape, p->value);
  for (const auto& [name, m] : opt.m) add_array("adam_m:" + name, {static_cast<int>(m.size())}, m);
  for (const auto& [name, v] : opt.v) add_array("adam_v:" + name, {static_cast<int>(v.size())}, v);

  nlohmann::json manifest = {
      {"format", "WFCKPT01"},
      {"step", step},
      {"rng", rng_state},
      {"config", config},
      {"config_hash", fnv1a(config.dump())},
      {"adam", {{"t", opt.t},
                {"beta1", opt.beta1},
                {"beta2", opt.beta2},
                {"epsilon", opt.epsilon},
                {"learning_rate", opt.learning_rate}}},
      {"arrays", arrays},
  };
  std::string mbytes = manifest.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open for writing: " + path);
  f.write(kCheckpointMagic, 8);
  uint64_t mlen = mbytes.size();
  f.write(reinterpret_cast<const char*>(&mlen), 8);
  f.write(mbytes.data(), static_cast<std::streamsize>(mbytes.size()));
  f.write(reinterpret_cast<const char*>(blob.data()),
          static_cast<std::streamsize>(blob.size() * sizeof(float)));
  if (!f) throw CheckpointError("write failed: " + path);
}

struct CheckpointHeader {
  long step = 0;
  std::string rng_state;
  nlohmann::json config;
  uint64_t config_hash = 0;
};

// Reads just the manifest (for config inspection without parameters).
inline CheckpointHeader read_checkpoint_header(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw CheckpointError("bad checkpoint magic: " + path);
  uint64_t mlen = 0;
  f.read(reinterpret_cast<char*>(&mlen), 8);
  std::string mbytes(mlen, '\0');
  f.read(mbytes.data(), static_cast<std::streamsize>(mlen));
  if (!f) throw CheckpointError("truncated manifest: " + path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mbytes);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("manifest parse error: ") + e.what());
  }
  CheckpointHeader h;
  h.step = manifest.at("step").get<long>();
  h.rng_state = manifest.at("rng").get<std::string>();
  h.config = manifest.at("config");
  h.config_hash = manifest.at("config_hash").get<uint64_t>();
  if (h.config_hash != fnv1a(h.config.dump()))
    throw CheckpointError("config hash mismatch: " + path);
  return h;
}

// Parameters must already be registered with matching names and shapes; this
// fills in values and optimizer state.
template <class S>
inline CheckpointHeader load_checkpoint(const std::string& path, ParamRegistry<S>& params,
                                        AdamState<S>& opt) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw CheckpointError("bad checkpoint magic: " + path);
  uint64_t mlen = 0;
  f.read(reinterpret_cast<char*>(&mlen), 8);
  std::string mbytes(mlen, '\0');
  f.read(mbytes.data(), static_cast<std::streamsize>(mlen));
  if (!f) throw CheckpointError("truncated manifest: " + path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mbytes);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("manifest parse error: ") + e.what());
  }
  std::vector<float> blob;
  {
    std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (raw.size() % sizeof(float) != 0) throw CheckpointError("blob size not float-aligned");
    blob.resize(raw.size() / sizeof(float));
    std::memcpy(blob.data(), raw.data(), raw.size());
  }

  const auto& arrays = manifest.at("arrays");
  size_t matched = 0;
  for (auto& [name, p] : params.ordered()) {
    std::string key = "param:" + name;
    if (!arrays.contains(key)) throw CheckpointError("checkpoint missing parameter: " + name);
    const auto& meta = arrays.at(key);
    Shape shape = meta.at("shape").get<Shape>();
    if (shape != p->shape)
      throw CheckpointError("shape mismatch for " + name + ": file " + shape_str(shape) +
                            " vs model " + shape_str(p->shape));
    p->value = ckptdetail::take_f32<S>(blob, meta.at("offset").get<size_t>(),
                                       meta.at("size").get<size_t>());
    ++matched;
  }
  // every param: array in the file must belong to this model
  for (auto it = arrays.begin(); it != arrays.end(); ++it) {
    const std::string& key = it.key();
    if (key.rfind("param:", 0) == 0 && !params.has(key.substr(6)))
      throw CheckpointError("unexpected parameter in checkpoint: " + key.substr(6));
  }
  (void)matched;

  const auto& adam = manifest.at("adam");
  opt.t = adam.at("t").get<long>();
  opt.beta1 = adam.at("beta1").get<double>();
  opt.beta2 = adam.at("beta2").get<double>();
  opt.epsilon = adam.at("epsilon").get<double>();
  opt.learning_rate = adam.at("learning_rate").get<double>();
  opt.m.clear();
  opt.v.clear();
  for (auto it = arrays.begin(); it != arrays.end(); ++it) {
    const std::string& key = it.key();
    const auto& meta = it.value();
    auto take = [&] {
      return ckptdetail::take_f32<S>(blob, meta.at("offset").get<size_t>(),
                                     meta.at("size").get<size_t>());
    };
    if (key.rfind("adam_m:", 0) == 0) opt.m[key.substr(7)] = take();
    else if (key.rfind("adam_v:", 0) == 0) opt.v[key.substr(7)] = take();
  }

  CheckpointHeader h;
  h.step = manifest.at("step").get<long>();
  h.rng_state = manifest.at("rng").get<std::string>();
  h.config = manifest.at("config");
  h.config_hash = manifest.at("config_hash").get<uint64_t>();
  if (h.config_hash != fnv1a(h.config.dump()))
    throw CheckpointError("config hash mismatch: " + path);
  return h;
}

}  // namespace waveflow
