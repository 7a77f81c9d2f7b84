#pragma once

// Standalone non-autoregressive flow vocoder: log-mel frames are encoded by a
// dilated convnet, upsampled to the flow frame rate, and condition a single
// whole-utterance flow pass. No step loop; all frames transform together.

#include "waveflow/flow.hpp"
#include "waveflow/mel.hpp"
#include "waveflow/nn.hpp"
#include "waveflow/signal.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace waveflow {

struct VocoderConfig {
  int sample_rate = 24000;
  int conditioning_rate = 1600;  // flow frames per second
  int frame_length = 15;         // L = sample_rate / conditioning_rate
  int stages = 6;                // M
  int steps_per_stage = 10;      // N
  int coupling_channels = 256;
  int conv_channels = 512;  // dilated conditioning stack width
  int conv_layers = 5;      // dilations 1, 2, 4, ..., 2^(layers-1)
  int position_dim = 16;    // subframe position embedding width
  double temperature = 0.7;
  bool use_preemphasis = true;

  StftGeometry mel_geometry() const {
    StftGeometry geo;
    geo.sample_rate = sample_rate;
    return geo;
  }
  // flow frames per mel frame (hop 12.5 ms -> 20 at the paper rates)
  int subframes() const { return mel_geometry().hop_length() / frame_length; }
  int frame_granularity() const { return 1 << (stages - 1); }
  int sample_granularity() const { return frame_length * frame_granularity(); }

  void validate() const {
    if (sample_rate <= 0 || conditioning_rate <= 0)
      throw std::invalid_argument("vocoder config: non-positive rate");
    if (sample_rate % conditioning_rate != 0 ||
        sample_rate / conditioning_rate != frame_length)
      throw std::invalid_argument("vocoder config: L must equal sample_rate/conditioning_rate");
    if (mel_geometry().hop_length() % frame_length != 0)
      throw std::invalid_argument("vocoder config: mel hop must be a multiple of L");
    if (conv_layers < 1 || conv_channels < 1)
      throw std::invalid_argument("vocoder config: empty conditioning stack");
    if (position_dim < 0 || position_dim % 2 != 0)
      throw std::invalid_argument("vocoder config: position_dim must be even");
    flow_config().validate();
  }

  FlowConfig flow_config() const {
    FlowConfig f;
    f.block_size = sample_granularity();  // minimum unit; inputs may be longer
    f.frame_length = frame_length;
    f.stages = stages;
    f.steps_per_stage = steps_per_stage;
    f.coupling_channels = coupling_channels;
    f.position_dim = position_dim;
    f.temperature = temperature;
    return f;
  }
};

// clang-format off
#define WF_VOCODER_FIELDS(X) \
  X(sample_rate) X(conditioning_rate) X(frame_length) X(stages) X(steps_per_stage) \
  X(coupling_channels) X(conv_channels) X(conv_layers) X(position_dim) X(temperature) \
  X(use_preemphasis)
// clang-format on

inline nlohmann::json vocoder_config_to_json(const VocoderConfig& c) {
  nlohmann::json j;
#define X(f) j[#f] = c.f;
  WF_VOCODER_FIELDS(X)
#undef X
  return j;
}

inline VocoderConfig vocoder_config_from_json(const nlohmann::json& j,
                                              const std::string& what = "vocoder config") {
  if (!j.is_object()) throw std::invalid_argument(what + ": expected a JSON object");
  std::set<std::string> known;
#define X(f) known.insert(#f);
  WF_VOCODER_FIELDS(X)
#undef X
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw std::invalid_argument(what + ": unknown key '" + it.key() + "'");
  VocoderConfig c;
#define X(f) if (j.contains(#f)) j.at(#f).get_to(c.f);
  WF_VOCODER_FIELDS(X)
#undef X
  c.validate();
  return c;
}

#undef WF_VOCODER_FIELDS

template <class S>
class Vocoder {
 public:
  Vocoder() = default;

  Vocoder(ParamRegistry<S>& reg, const VocoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    int in = kMelChannels;
    for (int l = 0; l < cfg_.conv_layers; ++l) {
      convs_.push_back(Conv1dLayer<S>(reg, "voc.cond.conv" + std::to_string(l), 3, in,
                                      cfg_.conv_channels, rng, 1 << l));
      in = cfg_.conv_channels;
    }
    flow_ = Flow<S>(reg, "voc.flow", cfg_.flow_config(), cfg_.conv_channels, rng);
  }

  const VocoderConfig& config() const { return cfg_; }
  const Flow<S>& flow() const { return flow_; }

  // Number of flow frames implied by a mel sequence, rounded up to the
  // squeeze granularity.
  long frames_for_mel(size_t mel_frames) const {
    long j = static_cast<long>(mel_frames) * cfg_.subframes();
    long g = cfg_.frame_granularity();
    return (j + g - 1) / g * g;
  }

  // [n_frames, conv_channels + position_dim] conditioning rows at the flow
  // frame rate: dilated stack over mel, nearest-neighbor upsampling, then
  // per-subframe position embeddings.
  Var<S> encode_mel(Tape<S>& tape, const LogMelSpectrogram& mel, long n_frames) const {
    if (mel.geometry.sample_rate != cfg_.sample_rate)
      throw std::invalid_argument("encode_mel: sample rate mismatch");
    if (mel.n_mels != kMelChannels)
      throw std::invalid_argument("encode_mel: channel count mismatch");
    if (mel.frames.empty()) throw std::invalid_argument("encode_mel: empty input");

    int f = static_cast<int>(mel.frames.size());
    std::vector<S> data(static_cast<size_t>(f) * kMelChannels);
    for (int i = 0; i < f; ++i)
      for (int m = 0; m < kMelChannels; ++m)
        data[static_cast<size_t>(i) * kMelChannels + m] = static_cast<S>(mel.frames[i][m]);
    auto x = make_var<S>({f, kMelChannels}, std::move(data));
    for (const auto& conv : convs_) x = tanh_op(tape, conv(tape, x));

    int sub = cfg_.subframes();
    std::vector<int> frame_ids(n_frames), sub_ids(n_frames);
    for (long j = 0; j < n_frames; ++j) {
      frame_ids[j] = static_cast<int>(std::min<long>(j / sub, f - 1));
      sub_ids[j] = static_cast<int>(j % sub);
    }
    auto rows = gather_rows(tape, x, frame_ids);
    if (cfg_.position_dim > 0) {
      auto table = flowdetail::position_embeddings<S>(sub, cfg_.position_dim);
      rows = concat_cols(tape, rows, gather_rows(tape, table, sub_ids));
    }
    return rows;
  }

  // Stage-0 rows pair-averaged down the squeeze hierarchy.
  ConditioningFrames<S> spread(Tape<S>& tape, const Var<S>& rows) const {
    ConditioningFrames<S> out;
    Var<S> cur = rows;
    for (int m = 0; m < cfg_.stages; ++m) {
      if (m > 0) cur = pair_average_rows(tape, cur);
      out.per_stage.push_back(cur);
    }
    return out;
  }

  Waveform pad_to_granularity(const Waveform& w) const {
    Waveform out = w;
    long g = cfg_.sample_granularity();
    long n = static_cast<long>(out.samples.size());
    out.samples.resize((n + g - 1) / g * g, 0.0);
    return out;
  }

  // Whole-utterance Eq. 5 NLL; the mel is recomputed on the padded signal so
  // conditioning and target always describe the same audio.
  Var<S> nll(Tape<S>& tape, const Waveform& waveform) const {
    if (waveform.sample_rate != cfg_.sample_rate)
      throw std::invalid_argument("vocoder nll: sample rate mismatch");
    auto padded = pad_to_granularity(waveform);
    auto mel = log_mel(padded, cfg_.mel_geometry());
    auto target = cfg_.use_preemphasis ? preemphasize(padded) : padded;
    long n = static_cast<long>(target.samples.size());
    auto cond = spread(tape, encode_mel(tape, mel, n / cfg_.frame_length));
    std::vector<S> y(n);
    for (long i = 0; i < n; ++i) y[i] = static_cast<S>(target.samples[i]);
    return flow_.nll(tape, make_var<S>({1, static_cast<int>(n)}, std::move(y)), cond);
  }

  // Single inverse-flow pass over every frame at once (Eq. 3 without a loop).
  Waveform vocode(const LogMelSpectrogram& mel, double temperature, Rng& rng) const {
    Tape<S> tape;
    tape.recording = false;
    long j = frames_for_mel(mel.frames.size());
    long n = j * cfg_.frame_length;
    auto cond = spread(tape, encode_mel(tape, mel, j));
    auto z = flow_.sample_latent(rng, temperature, n);
    auto y = flow_.synthesis(tape, make_var<S>({1, static_cast<int>(n)}, std::move(z)), cond);
    Waveform out;
    out.sample_rate = cfg_.sample_rate;
    out.samples.resize(n);
    for (long i = 0; i < n; ++i) out.samples[i] = static_cast<double>(y->value[i]);
    return cfg_.use_preemphasis ? deemphasize(out) : out;
  }

 private:
  VocoderConfig cfg_;
  std::vector<Conv1dLayer<S>> convs_;
  Flow<S> flow_;
};

// Independent utterances vocoded concurrently. Per-utterance seeds make the
// result independent of the thread count.
template <class S>
inline std::vector<Waveform> vocode_many(const Vocoder<S>& voc,
                                         const std::vector<LogMelSpectrogram>& mels,
                                         double temperature, uint64_t base_seed,
                                         int n_threads) {
  std::vector<Waveform> out(mels.size());
  n_threads = std::max(1, n_threads);
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < mels.size(); i = next.fetch_add(1)) {
      Rng rng(base_seed + i);
      out[i] = voc.vocode(mels[i], temperature, rng);
    }
  };
  if (n_threads == 1 || mels.size() < 2) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return out;
}

}  // namespace waveflow
