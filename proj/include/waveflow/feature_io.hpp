#pragma once

// Feature dumps: flat little-endian float32 binary plus a JSON sidecar
// carrying shape and STFT geometry.

#include "waveflow/mel.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace waveflow {

inline void write_feature_dump(const std::vector<std::vector<double>>& frames,
                               const StftGeometry& geo, const std::string& path) {
  std::ofstream bin(path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + path);
  int dim = frames.empty() ? 0 : static_cast<int>(frames[0].size());
  for (const auto& frame : frames)
    for (double v : frame) {
      float f = static_cast<float>(v);
      bin.write(reinterpret_cast<const char*>(&f), sizeof(float));
    }
  nlohmann::json side;
  side["shape"] = {static_cast<int>(frames.size()), dim};
  side["dtype"] = "float32le";
  side["sample_rate"] = geo.sample_rate;
  side["window_ms"] = geo.window_ms;
  side["hop_ms"] = geo.hop_ms;
  std::ofstream js(path + ".json");
  if (!js) throw std::runtime_error("cannot write " + path + ".json");
  js << side.dump(2) << "\n";
}

inline std::pair<std::vector<std::vector<double>>, StftGeometry> read_feature_dump(
    const std::string& path) {
  std::ifstream js(path + ".json");
  if (!js) throw std::runtime_error("missing sidecar " + path + ".json");
  nlohmann::json side = nlohmann::json::parse(js);
  int rows = side.at("shape").at(0), dim = side.at("shape").at(1);
  StftGeometry geo;
  geo.sample_rate = side.value("sample_rate", 24000);
  geo.window_ms = side.value("window_ms", 50.0);
  geo.hop_ms = side.value("hop_ms", 12.5);
  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot read " + path);
  std::vector<std::vector<double>> frames(rows, std::vector<double>(dim));
  for (auto& frame : frames)
    for (auto& v : frame) {
      float f = 0;
      bin.read(reinterpret_cast<char*>(&f), sizeof(float));
      v = f;
    }
  if (!bin) throw std::runtime_error("feature dump shorter than sidecar shape: " + path);
  return {std::move(frames), geo};
}

}  // namespace waveflow
