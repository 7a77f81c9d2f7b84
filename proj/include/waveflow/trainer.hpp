#pragma once

// Corpus handling (synthetic token-to-tone data and wav+transcript
// directories), the teacher-forced training objective, and the train loop
// with CSV logging and resumable checkpoints.

#include "waveflow/adam.hpp"
#include "waveflow/checkpoint.hpp"
#include "waveflow/model.hpp"
#include "waveflow/signal.hpp"
#include "waveflow/vocoder.hpp"
#include "waveflow/wav.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace waveflow {

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Utterance {
  std::vector<int> tokens;
  Waveform waveform;             // used directly when levels is empty
  std::vector<uint16_t> levels;  // quantized source; dequantized freshly per use
};

struct ToyCorpusSpec {
  int n_tone_tokens = 8;  // token i at 200 * 2^(i/4) Hz; token 8 is silence
  int sample_rate = 8000;
  double base_freq = 200.0;
  double segment_ms = 60.0;
  double crossfade_ms = 5.0;
  double trailing_silence_ms = 100.0;
  int min_tokens = 3;
  int max_tokens = 10;
  double amplitude = 0.5;
  uint64_t seed = 0;

  int vocab_size() const { return n_tone_tokens + 1; }
  int silence_token() const { return n_tone_tokens; }
  double tone_hz(int token) const { return base_freq * std::pow(2.0, token / 4.0); }
};

inline Utterance generate_toy_utterance(const ToyCorpusSpec& spec, long index) {
  Rng rng = Rng(spec.seed).fork(static_cast<uint64_t>(index));
  int n_tok = rng.uniform_int(spec.min_tokens, spec.max_tokens);
  Utterance u;
  for (int i = 0; i < n_tok; ++i) u.tokens.push_back(rng.uniform_int(0, spec.vocab_size() - 1));

  int seg = static_cast<int>(std::lround(spec.segment_ms * spec.sample_rate / 1000.0));
  int xf = static_cast<int>(std::lround(spec.crossfade_ms * spec.sample_rate / 1000.0));
  int tail = static_cast<int>(std::lround(spec.trailing_silence_ms * spec.sample_rate / 1000.0));
  int hop = seg - xf;
  long total = static_cast<long>(seg) + static_cast<long>(hop) * (n_tok - 1) + tail;
  u.waveform.sample_rate = spec.sample_rate;
  u.waveform.samples.assign(total, 0.0);

  for (int i = 0; i < n_tok; ++i) {
    long off = static_cast<long>(hop) * i;
    bool silent = u.tokens[i] == spec.silence_token();
    double f = silent ? 0.0 : spec.tone_hz(u.tokens[i]);
    for (int s = 0; s < seg; ++s) {
      double v = silent ? 0.0
                        : spec.amplitude * std::sin(2.0 * M_PI * f * s / spec.sample_rate);
      double g = 1.0;
      if (i > 0 && s < xf) g *= static_cast<double>(s) / xf;           // fade in
      if (i + 1 < n_tok && s >= hop) g *= static_cast<double>(seg - s) / xf;  // fade out
      u.waveform.samples[off + s] += g * v;
    }
  }
  return u;
}

inline std::vector<Utterance> generate_toy_corpus(const ToyCorpusSpec& spec, long n) {
  if (n < 1) throw std::invalid_argument("generate_toy_corpus: n must be >= 1");
  std::vector<Utterance> out;
  out.reserve(n);
  for (long k = 0; k < n; ++k) out.push_back(generate_toy_utterance(spec, k));
  return out;
}

// Vocabulary: newline-separated single-character tokens, line index = id.
inline std::map<char, int> load_vocabulary(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw TrainError("cannot open vocabulary: " + path);
  std::map<char, int> vocab;
  std::string line;
  int id = 0;
  while (std::getline(f, line)) {
    if (line.size() != 1)
      throw TrainError("vocabulary line " + std::to_string(id) + " is not a single character");
    if (vocab.count(line[0])) throw TrainError("duplicate vocabulary token: " + line);
    vocab[line[0]] = id++;
  }
  if (vocab.empty()) throw TrainError("empty vocabulary: " + path);
  return vocab;
}

struct IngestResult {
  std::vector<Utterance> utterances;
  std::vector<std::string> skipped;  // "<file>: <reason>"
};

// Loads *.wav with sibling *.txt transcripts; keeps quantized levels so
// dequantization noise is drawn fresh at each use.
inline IngestResult ingest_directory(const std::string& dir, const std::string& vocab_path) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw TrainError("not a directory: " + dir);
  auto vocab = load_vocabulary(vocab_path);
  std::vector<fs::path> wavs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") wavs.push_back(e.path());
  std::sort(wavs.begin(), wavs.end());
  if (wavs.empty()) throw TrainError("no .wav files in " + dir);

  IngestResult out;
  for (const auto& wav_path : wavs) {
    auto txt_path = fs::path(wav_path).replace_extension(".txt");
    std::string name = wav_path.filename().string();
    if (!fs::exists(txt_path)) {
      out.skipped.push_back(name + ": missing transcript");
      continue;
    }
    std::ifstream tf(txt_path);
    std::string text;
    std::getline(tf, text);
    while (!text.empty() && (text.back() == '\r' || text.back() == '\n')) text.pop_back();
    Utterance u;
    bool ok = true;
    for (char c : text) {
      auto it = vocab.find(c);
      if (it == vocab.end()) {
        out.skipped.push_back(name + ": out-of-vocabulary character '" + std::string(1, c) + "'");
        ok = false;
        break;
      }
      u.tokens.push_back(it->second);
    }
    if (!ok) continue;
    if (u.tokens.empty()) {
      out.skipped.push_back(name + ": empty transcript");
      continue;
    }
    try {
      auto [pcm, rate] = load_wav(wav_path.string());
      u.levels = pcm_to_levels(pcm);
      u.waveform.sample_rate = rate;
    } catch (const WavError& e) {
      out.skipped.push_back(name + ": " + e.what());
      continue;
    }
    out.utterances.push_back(std::move(u));
  }
  return out;
}

struct TrainConfig {
  ModelConfig model;
  int batch_size = 4;
  long max_steps = 10000;
  long checkpoint_interval = 500;
  uint64_t seed = 0;
  double learning_rate = 1e-3;
  long lr_hold_steps = 10000;
  double clip_norm = 1.0;  // global grad-norm clip; <= 0 disables
  int n_pad = 2;
  bool resume = false;
  std::string checkpoint_path = "model.ckpt";
  std::string log_path = "train_log.csv";
};

// clang-format off
#define WF_TRAIN_FIELDS(X) \
  X(batch_size) X(max_steps) X(checkpoint_interval) X(seed) X(learning_rate) \
  X(lr_hold_steps) X(clip_norm) X(n_pad) X(resume) X(checkpoint_path) X(log_path)
// clang-format on

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["model"] = model_config_to_json(c.model);
#define X(f) j[#f] = c.f;
  WF_TRAIN_FIELDS(X)
#undef X
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("train config: expected a JSON object");
  std::set<std::string> known{"model"};
#define X(f) known.insert(#f);
  WF_TRAIN_FIELDS(X)
#undef X
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw std::invalid_argument("train config: unknown key '" + it.key() + "'");
  TrainConfig c;
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
#define X(f) if (j.contains(#f)) j.at(#f).get_to(c.f);
  WF_TRAIN_FIELDS(X)
#undef X
  return c;
}

#undef WF_TRAIN_FIELDS

// Dequantize (fresh noise when quantized levels are present), optionally
// pre-emphasize, partition into stop-labeled blocks.
inline StopLabeledBlocks prepare_blocks(const Utterance& u, const ModelConfig& cfg, int n_pad,
                                        Rng& rng) {
  Waveform w = u.levels.empty() ? u.waveform
                                : dequantize(u.levels, u.waveform.sample_rate, rng);
  if (cfg.use_preemphasis) w = preemphasize(w);
  return block_partition(w, cfg.block_size(), n_pad);
}

struct StepLosses {
  double flow_nll_per_dim = 0.0;
  double eos = 0.0;
  double total() const { return flow_nll_per_dim + eos; }
};

namespace trainerdetail {

template <class S>
inline Var<S> block_var(const std::vector<double>& block) {
  std::vector<S> d(block.begin(), block.end());
  return make_var<S>({1, static_cast<int>(block.size())}, std::move(d));
}

// Per-utterance loss terms; padded decoder steps beyond the real block count
// run but are excluded from both means.
template <class S>
struct UtteranceLoss {
  Var<S> flow_nll;  // mean over unmasked steps
  Var<S> eos;       // mean over unmasked steps
};

template <class S>
inline UtteranceLoss<S> utterance_loss(Tape<S>& tape, const WaveTacotron<S>& model,
                                       const Utterance& u, const StopLabeledBlocks& blocks,
                                       bool training, Rng& rng, long pad_to_steps = 0) {
  const auto& cfg = model.config();
  long t_real = static_cast<long>(blocks.blocks.size());
  long t_total = std::max(t_real, pad_to_steps);
  UtteranceLoss<S> out;

  if (cfg.unconditional) {
    auto cond = model.null_conditioning(tape);
    Var<S> total;
    long used = 0;
    for (long t = 0; t < t_real; ++t) {
      if (blocks.stop_labels[t]) continue;  // no stop head in this mode
      auto nll = model.flow().nll(tape, block_var<S>(blocks.blocks[t]), cond);
      total = total ? add(tape, total, nll) : nll;
      ++used;
    }
    out.flow_nll = scale(tape, total, S(1.0 / used));
    out.eos = scalar_var<S>(S(0));
    return out;
  }

  auto memory = model.encoder()(tape, u.tokens);
  auto state = model.decoder().initial_state(static_cast<int>(u.tokens.size()));
  int tail_len = cfg.block_base;
  int k = cfg.block_size();

  Var<S> nll_sum, eos_sum;
  std::vector<Var<S>> stop_preds;
  std::vector<int> labels, mask;
  for (long t = 0; t < t_total; ++t) {
    if (t > 0 && t - 1 < t_real) {
      // ground-truth feedback: final K/R samples of the previous block
      const auto& prev = blocks.blocks[t - 1];
      std::vector<S> tail(prev.end() - tail_len, prev.end());
      state.prev_tail = make_var<S>({1, tail_len}, std::move(tail));
    } else if (t > 0) {
      state.prev_tail = zeros_var<S>({1, tail_len});  // padding blocks are all zero
    }
    auto [c_t, next] = model.decoder().step(tape, state, memory, training, rng);
    state = next;
    bool masked = t >= t_real;
    auto cond = model.upsample(tape, c_t);
    auto y = block_var<S>(masked ? std::vector<double>(k, 0.0) : blocks.blocks[t]);
    auto nll = model.flow().nll(tape, y, cond);
    auto stop = model.decoder().stop_token(tape, c_t);
    stop_preds.push_back(stop);
    labels.push_back(masked ? 1 : blocks.stop_labels[t]);
    mask.push_back(masked ? 0 : 1);
    if (!masked) nll_sum = nll_sum ? add(tape, nll_sum, nll) : nll;
  }
  out.flow_nll = scale(tape, nll_sum, S(1.0 / t_real));
  out.eos = eos_loss(tape, stop_preds, labels, mask);
  return out;
}

}  // namespace trainerdetail

// One optimizer update over a batch. Returns per-dimension flow NLL and the
// EOS loss, both batch means.
template <class S>
inline StepLosses train_step(WaveTacotron<S>& model, const std::vector<const Utterance*>& batch,
                             AdamState<S>& opt, Rng& rng, double lr_override = -1.0,
                             int n_pad = 2, double clip_norm = 0.0) {
  if (batch.empty()) throw TrainError("train_step: empty batch");
  Tape<S> tape;
  Var<S> nll_total, eos_total;
  long pad_to = 0;
  std::vector<StopLabeledBlocks> all_blocks;
  for (const Utterance* u : batch) {
    all_blocks.push_back(prepare_blocks(*u, model.config(), n_pad, rng));
    pad_to = std::max(pad_to, static_cast<long>(all_blocks.back().blocks.size()));
  }
  for (size_t i = 0; i < batch.size(); ++i) {
    auto ul = trainerdetail::utterance_loss(tape, model, *batch[i], all_blocks[i], true, rng,
                                            pad_to);
    nll_total = nll_total ? add(tape, nll_total, ul.flow_nll) : ul.flow_nll;
    eos_total = eos_total ? add(tape, eos_total, ul.eos) : ul.eos;
  }
  S inv_b = S(1.0 / batch.size());
  auto nll_mean = scale(tape, nll_total, inv_b);
  auto eos_mean = scale(tape, eos_total, inv_b);
  auto loss = add(tape, nll_mean, eos_mean);

  StepLosses losses;
  losses.flow_nll_per_dim = static_cast<double>(nll_mean->scalar()) / model.config().block_size();
  losses.eos = static_cast<double>(eos_mean->scalar());

  model.params().zero_grads();
  tape.backward(loss);
  clip_grad_norm(model.params(), clip_norm);
  adam_step(model.params(), opt, lr_override);
  model.params().zero_grads();
  tape.clear();
  return losses;
}

// Teacher-forced losses without an update (dropout off).
template <class S>
inline StepLosses eval_losses(const WaveTacotron<S>& model, const std::vector<Utterance>& data,
                              Rng& rng, int n_pad = 2) {
  if (data.empty()) throw TrainError("eval_losses: empty eval set");
  Tape<S> tape;
  tape.recording = false;
  double nll = 0, eos = 0;
  for (const auto& u : data) {
    auto blocks = prepare_blocks(u, model.config(), n_pad, rng);
    auto ul = trainerdetail::utterance_loss(tape, model, u, blocks, false, rng);
    nll += ul.flow_nll->scalar();
    eos += ul.eos->scalar();
  }
  StepLosses out;
  out.flow_nll_per_dim = nll / data.size() / model.config().block_size();
  out.eos = eos / data.size();
  return out;
}

struct FitResult {
  long final_step = 0;
  StepLosses last_losses;
};

// Training loop: random batches, lr decay, CSV log, periodic checkpoints.
// Resuming restores parameters, optimizer and rng, giving an identical
// continuation of the uninterrupted run.
template <class S>
inline FitResult fit(const TrainConfig& cfg, const std::vector<Utterance>& data,
                     WaveTacotron<S>& model, std::ostream* console = nullptr) {
  if (data.empty()) throw TrainError("fit: empty dataset");
  AdamState<S> opt;
  opt.learning_rate = cfg.learning_rate;
  Rng rng(cfg.seed);
  long start_step = 0;
  if (cfg.resume) {
    auto header = load_checkpoint(cfg.checkpoint_path, model.params(), opt);
    rng.deserialize(header.rng_state);
    start_step = header.step;
  }
  std::ofstream log(cfg.log_path, cfg.resume ? std::ios::app : std::ios::trunc);
  if (!log) throw TrainError("cannot open log: " + cfg.log_path);
  if (!cfg.resume) log << "step,flow_nll_per_dim,eos_loss,wall_ms\n";

  auto save = [&](long step) {
    save_checkpoint(cfg.checkpoint_path, model.params(), opt, step, rng.serialize(),
                    model_config_to_json(model.config()));
  };

  FitResult result;
  for (long step = start_step + 1; step <= cfg.max_steps; ++step) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<const Utterance*> batch;
    for (int b = 0; b < cfg.batch_size; ++b)
      batch.push_back(&data[rng.uniform_int(0, static_cast<int>(data.size()) - 1)]);
    double lr = adam_lr_schedule(cfg.learning_rate, step, cfg.lr_hold_steps);
    StepLosses losses;
    try {
      losses = train_step(model, batch, opt, rng, lr, cfg.n_pad, cfg.clip_norm);
    } catch (const NumericError& e) {
      save(step - 1);
      throw TrainError("step " + std::to_string(step) + ": " + e.what());
    }
    if (losses.flow_nll_per_dim > 50.0)
      throw TrainError("training diverged at step " + std::to_string(step) +
                       ": flow NLL/dim = " + std::to_string(losses.flow_nll_per_dim));
    auto t1 = std::chrono::steady_clock::now();
    double wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    log << step << "," << losses.flow_nll_per_dim << "," << losses.eos << "," << wall_ms << "\n";
    log.flush();
    if (console && step % 50 == 0)
      *console << "step " << step << " nll/dim " << losses.flow_nll_per_dim << " eos "
               << losses.eos << " (" << wall_ms << " ms)" << std::endl;
    if (step % cfg.checkpoint_interval == 0 || step == cfg.max_steps) save(step);
    result.final_step = step;
    result.last_losses = losses;
  }
  if (result.final_step == 0) result.final_step = start_step;  // nothing left to do
  return result;
}

// Transcript-free ingest for vocoder training: every readable 16-bit wav in
// the directory, quantized levels kept for fresh dequantization noise.
inline IngestResult ingest_waveforms(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw TrainError("not a directory: " + dir);
  std::vector<fs::path> wavs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") wavs.push_back(e.path());
  std::sort(wavs.begin(), wavs.end());
  if (wavs.empty()) throw TrainError("no .wav files in " + dir);

  IngestResult out;
  for (const auto& wav_path : wavs) {
    Utterance u;
    try {
      auto [pcm, rate] = load_wav(wav_path.string());
      u.levels = pcm_to_levels(pcm);
      u.waveform.sample_rate = rate;
    } catch (const WavError& e) {
      out.skipped.push_back(wav_path.filename().string() + ": " + e.what());
      continue;
    }
    out.utterances.push_back(std::move(u));
  }
  return out;
}

struct VocoderTrainConfig {
  VocoderConfig model;
  long max_steps = 1000;
  long checkpoint_interval = 500;
  uint64_t seed = 0;
  double learning_rate = 1e-3;
  long lr_hold_steps = 10000;
  double clip_norm = 1.0;  // global grad-norm clip; <= 0 disables
  bool resume = false;
  std::string checkpoint_path = "vocoder.ckpt";
  std::string log_path = "vocoder_log.csv";
};

// One utterance per step: dequantize with fresh noise, whole-utterance Eq. 5
// NLL normalized per sample. Checkpoints tag the config under "vocoder" so
// loaders can tell the two model kinds apart.
template <class S>
inline FitResult vocoder_fit(const VocoderTrainConfig& cfg, const std::vector<Utterance>& data,
                             Vocoder<S>& voc, ParamRegistry<S>& params,
                             std::ostream* console = nullptr) {
  if (data.empty()) throw TrainError("vocoder_fit: empty dataset");
  AdamState<S> opt;
  opt.learning_rate = cfg.learning_rate;
  Rng rng(cfg.seed);
  long start_step = 0;
  if (cfg.resume) {
    auto header = load_checkpoint(cfg.checkpoint_path, params, opt);
    rng.deserialize(header.rng_state);
    start_step = header.step;
  }
  std::ofstream log(cfg.log_path, cfg.resume ? std::ios::app : std::ios::trunc);
  if (!log) throw TrainError("cannot open log: " + cfg.log_path);
  if (!cfg.resume) log << "step,flow_nll_per_dim,wall_ms\n";

  auto save = [&](long step) {
    nlohmann::json config = {{"vocoder", vocoder_config_to_json(voc.config())}};
    save_checkpoint(cfg.checkpoint_path, params, opt, step, rng.serialize(), config);
  };

  FitResult result;
  for (long step = start_step + 1; step <= cfg.max_steps; ++step) {
    auto t0 = std::chrono::steady_clock::now();
    const Utterance& u = data[rng.uniform_int(0, static_cast<int>(data.size()) - 1)];
    double lr = adam_lr_schedule(cfg.learning_rate, step, cfg.lr_hold_steps);
    double nll_per_dim = 0.0;
    try {
      Tape<S> tape;
      Waveform w = u.levels.empty() ? u.waveform
                                    : dequantize(u.levels, u.waveform.sample_rate, rng);
      auto nll = voc.nll(tape, w);
      long n = voc.pad_to_granularity(w).samples.size();
      auto loss = scale(tape, nll, S(1.0 / n));
      nll_per_dim = loss->scalar();
      tape.backward(loss);
      clip_grad_norm(params, cfg.clip_norm);
      adam_step(params, opt, lr);
    } catch (const NumericError& e) {
      save(step - 1);
      throw TrainError("step " + std::to_string(step) + ": " + e.what());
    }
    if (nll_per_dim > 50.0)
      throw TrainError("training diverged at step " + std::to_string(step) +
                       ": flow NLL/dim = " + std::to_string(nll_per_dim));
    auto t1 = std::chrono::steady_clock::now();
    double wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    log << step << "," << nll_per_dim << "," << wall_ms << "\n";
    log.flush();
    if (console && step % 50 == 0)
      *console << "step " << step << " nll/dim " << nll_per_dim << " (" << wall_ms << " ms)"
               << std::endl;
    if (step % cfg.checkpoint_interval == 0 || step == cfg.max_steps) save(step);
    result.final_step = step;
    result.last_losses.flow_nll_per_dim = nll_per_dim;
  }
  if (result.final_step == 0) result.final_step = start_step;
  return result;
}

}  // namespace waveflow
