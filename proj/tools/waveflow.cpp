// Command-line driver: corpus generation, training, synthesis, evaluation
// and benchmarking. Exit codes: 0 success, 1 runtime failure, 2 usage or
// config error.

#include "waveflow/evaluate.hpp"
#include "waveflow/feature_io.hpp"
#include "waveflow/runtime.hpp"
#include "waveflow/synthesis.hpp"
#include "waveflow/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace waveflow;

namespace {

using Scalar = float;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& path) {
  if (!j.is_object()) throw std::invalid_argument("config: " + path + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw std::invalid_argument("config: " + path + ": unknown key '" + it.key() + "'");
}

template <class T>
void opt(const json& j, const char* key, T& into) {
  if (j.contains(key)) j.at(key).get_to(into);
}

struct CliConfig {
  ModelConfig model;
  TrainConfig train;
  SynthesisConfig synth;
  VocoderConfig vocoder;
  bool has_vocoder = false;
};

CliConfig parse_cli_config(const json& root) {
  reject_unknown(root, {"model", "train", "synth", "ablations"}, "(top level)");
  CliConfig c;
  if (root.contains("model")) {
    const json& m = root.at("model");
    reject_unknown(m, {"sample_rate", "flow", "decoder", "vocoder"}, "model");
    opt(m, "sample_rate", c.model.sample_rate);
    if (m.contains("flow")) {
      const json& f = m.at("flow");
      reject_unknown(f,
                     {"block_base", "frame_length", "stages", "steps_per_stage",
                      "coupling_channels", "position_dim"},
                     "model.flow");
      opt(f, "block_base", c.model.block_base);
      opt(f, "frame_length", c.model.frame_length);
      opt(f, "stages", c.model.stages);
      opt(f, "steps_per_stage", c.model.steps_per_stage);
      opt(f, "coupling_channels", c.model.coupling_channels);
      opt(f, "position_dim", c.model.position_dim);
    }
    if (m.contains("decoder")) {
      const json& d = m.at("decoder");
      reject_unknown(d,
                     {"embedding_dim", "bank_max_width", "bank_channels", "highway_layers",
                      "gru_units", "prenet_units1", "prenet_units2", "prenet_dropout",
                      "attention_units", "attention_filters", "attention_kernel",
                      "attention_rnn_units", "decoder_units", "projection_dim"},
                     "model.decoder");
      opt(d, "embedding_dim", c.model.embedding_dim);
      opt(d, "bank_max_width", c.model.bank_max_width);
      opt(d, "bank_channels", c.model.bank_channels);
      opt(d, "highway_layers", c.model.highway_layers);
      opt(d, "gru_units", c.model.gru_units);
      opt(d, "prenet_units1", c.model.prenet_units1);
      opt(d, "prenet_units2", c.model.prenet_units2);
      opt(d, "prenet_dropout", c.model.prenet_dropout);
      opt(d, "attention_units", c.model.attention_units);
      opt(d, "attention_filters", c.model.attention_filters);
      opt(d, "attention_kernel", c.model.attention_kernel);
      opt(d, "attention_rnn_units", c.model.attention_rnn_units);
      opt(d, "decoder_units", c.model.decoder_units);
      opt(d, "projection_dim", c.model.projection_dim);
    }
    if (m.contains("vocoder")) {
      const json& v = m.at("vocoder");
      reject_unknown(v,
                     {"frame_length", "stages", "steps_per_stage", "coupling_channels",
                      "conv_channels", "conv_layers", "position_dim", "conditioning_rate"},
                     "model.vocoder");
      c.vocoder.sample_rate = c.model.sample_rate;
      opt(v, "conditioning_rate", c.vocoder.conditioning_rate);
      opt(v, "frame_length", c.vocoder.frame_length);
      opt(v, "stages", c.vocoder.stages);
      opt(v, "steps_per_stage", c.vocoder.steps_per_stage);
      opt(v, "coupling_channels", c.vocoder.coupling_channels);
      opt(v, "conv_channels", c.vocoder.conv_channels);
      opt(v, "conv_layers", c.vocoder.conv_layers);
      opt(v, "position_dim", c.vocoder.position_dim);
      c.has_vocoder = true;
    }
  }
  if (root.contains("train")) {
    const json& t = root.at("train");
    reject_unknown(t,
                   {"batch_size", "max_steps", "checkpoint_interval", "learning_rate",
                    "lr_hold_steps", "clip_norm", "n_pad", "seed"},
                   "train");
    opt(t, "batch_size", c.train.batch_size);
    opt(t, "max_steps", c.train.max_steps);
    opt(t, "checkpoint_interval", c.train.checkpoint_interval);
    opt(t, "learning_rate", c.train.learning_rate);
    opt(t, "lr_hold_steps", c.train.lr_hold_steps);
    opt(t, "clip_norm", c.train.clip_norm);
    opt(t, "n_pad", c.train.n_pad);
    opt(t, "seed", c.train.seed);
  }
  if (root.contains("synth")) {
    const json& s = root.at("synth");
    reject_unknown(s, {"stop_threshold", "max_steps", "seed"}, "synth");
    opt(s, "stop_threshold", c.synth.stop_threshold);
    opt(s, "max_steps", c.synth.max_steps);
    opt(s, "seed", c.synth.seed);
  }
  if (root.contains("ablations")) {
    const json& a = root.at("ablations");
    reject_unknown(a,
                   {"preemphasis", "position_embeddings", "skip_connection", "reduction_factor",
                    "temperature"},
                   "ablations");
    opt(a, "preemphasis", c.model.use_preemphasis);
    opt(a, "position_embeddings", c.model.use_position_embeddings);
    opt(a, "skip_connection", c.model.use_skip_connection);
    opt(a, "reduction_factor", c.model.r);
    opt(a, "temperature", c.model.temperature);
  }
  c.train.model = c.model;
  c.synth.temperature = c.model.temperature;
  c.vocoder.use_preemphasis = c.model.use_preemphasis;
  c.vocoder.temperature = c.model.temperature;
  if (c.has_vocoder) c.vocoder.validate();
  return c;
}

json load_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open config file: " + path);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config parse error in " + path + ": " + e.what());
  }
}

// vocab file -> (id->char string, char->id map implied by position)
std::string read_vocab_string(const std::string& path) {
  auto vocab = load_vocabulary(path);
  std::string s(vocab.size(), '\0');
  for (const auto& [ch, id] : vocab) s[id] = ch;
  return s;
}

std::vector<int> tokenize(const std::string& text, const std::string& vocab) {
  std::vector<int> ids;
  for (char ch : text) {
    auto pos = vocab.find(ch);
    if (pos == std::string::npos)
      throw std::invalid_argument("character '" + std::string(1, ch) + "' not in vocabulary");
    ids.push_back(static_cast<int>(pos));
  }
  if (ids.empty()) throw std::invalid_argument("empty text");
  return ids;
}

struct LoadedModel {
  std::unique_ptr<WaveTacotron<Scalar>> model;
  CheckpointHeader header;
};

LoadedModel load_model(const std::string& ckpt_path) {
  LoadedModel lm;
  lm.header = read_checkpoint_header(ckpt_path);
  auto cfg = model_config_from_json(lm.header.config, "checkpoint config");
  lm.model = std::make_unique<WaveTacotron<Scalar>>(cfg, 0);
  AdamState<Scalar> opt;
  load_checkpoint(ckpt_path, lm.model->params(), opt);
  return lm;
}

int cmd_toy_data(const std::string& out_dir, long n, uint64_t seed, int sample_rate) {
  if (n < 1) throw std::invalid_argument("--n must be >= 1");
  ToyCorpusSpec spec;
  spec.seed = seed;
  spec.sample_rate = sample_rate;
  fs::create_directories(out_dir);
  const std::string vocab = "ABCDEFGH_";
  {
    std::ofstream vf(out_dir + "/vocab.txt");
    if (!vf) throw TrainError("cannot write vocabulary in " + out_dir);
    for (char ch : vocab) vf << ch << "\n";
  }
  for (long k = 0; k < n; ++k) {
    auto u = generate_toy_utterance(spec, k);
    char name[32];
    std::snprintf(name, sizeof(name), "toy_%04ld", k);
    save_wav(u.waveform, out_dir + "/" + name + ".wav");
    std::ofstream tf(out_dir + "/" + name + ".txt");
    std::string text;
    for (int id : u.tokens) text += vocab[id];
    tf << text << "\n";
  }
  json report = {{"written", n}, {"dir", out_dir}};
  std::cout << report.dump() << std::endl;
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, bool resume, long steps_override, bool seed_given,
              uint64_t seed) {
  auto cli = parse_cli_config(load_json_file(config_path));

  // a model.vocoder section selects standalone vocoder training on bare wavs
  if (cli.has_vocoder) {
    auto ingest = ingest_waveforms(data_dir);
    for (const auto& s : ingest.skipped) std::cerr << "skipped " << s << std::endl;
    if (ingest.utterances.empty()) throw TrainError("no usable waveforms in " + data_dir);
    int rate = ingest.utterances.front().waveform.sample_rate;
    if (rate != cli.vocoder.sample_rate)
      throw TrainError("data sample rate " + std::to_string(rate) + " != config sample rate " +
                       std::to_string(cli.vocoder.sample_rate));
    fs::create_directories(out_dir);
    VocoderTrainConfig vt;
    vt.model = cli.vocoder;
    vt.max_steps = steps_override > 0 ? steps_override : cli.train.max_steps;
    vt.checkpoint_interval = cli.train.checkpoint_interval;
    vt.seed = seed_given ? seed : cli.train.seed;
    vt.learning_rate = cli.train.learning_rate;
    vt.lr_hold_steps = cli.train.lr_hold_steps;
    vt.clip_norm = cli.train.clip_norm;
    vt.resume = resume;
    vt.checkpoint_path = out_dir + "/vocoder.ckpt";
    vt.log_path = out_dir + "/vocoder_log.csv";
    ParamRegistry<Scalar> reg;
    Rng init(vt.seed);
    Vocoder<Scalar> voc(reg, vt.model, init);
    auto result = vocoder_fit(vt, ingest.utterances, voc, reg, &std::cerr);
    json report = {{"final_step", result.final_step},
                   {"flow_nll_per_dim", result.last_losses.flow_nll_per_dim},
                   {"checkpoint", vt.checkpoint_path}};
    std::cout << report.dump() << std::endl;
    return 0;
  }

  auto ingest = ingest_directory(data_dir, data_dir + "/vocab.txt");
  for (const auto& s : ingest.skipped) std::cerr << "skipped " << s << std::endl;
  if (ingest.utterances.empty()) throw TrainError("no usable utterances in " + data_dir);

  std::string vocab = read_vocab_string(data_dir + "/vocab.txt");
  cli.train.model.vocab = vocab;
  cli.train.model.vocab_size = static_cast<int>(vocab.size());
  int rate = ingest.utterances.front().waveform.sample_rate;
  if (rate != cli.train.model.sample_rate)
    throw TrainError("data sample rate " + std::to_string(rate) + " != config sample rate " +
                     std::to_string(cli.train.model.sample_rate));

  fs::create_directories(out_dir);
  cli.train.resume = resume;
  cli.train.checkpoint_path = out_dir + "/model.ckpt";
  cli.train.log_path = out_dir + "/train_log.csv";
  if (steps_override > 0) cli.train.max_steps = steps_override;
  if (seed_given) cli.train.seed = seed;

  WaveTacotron<Scalar> model(cli.train.model, cli.train.seed);
  auto result = fit(cli.train, ingest.utterances, model, &std::cerr);
  json report = {{"final_step", result.final_step},
                 {"flow_nll_per_dim", result.last_losses.flow_nll_per_dim},
                 {"eos_loss", result.last_losses.eos},
                 {"checkpoint", cli.train.checkpoint_path}};
  std::cout << report.dump() << std::endl;
  return 0;
}

int cmd_synth(const std::string& ckpt, const std::string& text, const std::string& out_wav,
              bool temp_given, double temperature, uint64_t seed, long max_steps,
              double stop_threshold, const std::string& transcriber) {
  auto lm = load_model(ckpt);
  auto tokens = tokenize(text, lm.model->config().vocab);
  SynthesisConfig cfg;
  cfg.temperature = temp_given ? temperature : lm.model->config().temperature;
  cfg.seed = seed;
  cfg.max_steps = max_steps;
  cfg.stop_threshold = stop_threshold;
  auto t0 = std::chrono::steady_clock::now();
  auto result = synthesize(*lm.model, tokens, cfg);
  auto t1 = std::chrono::steady_clock::now();
  save_wav(result.waveform, out_wav);
  json report = {{"n_steps", result.n_steps},
                 {"stopped_by_token", result.stopped_by_token},
                 {"seconds", std::chrono::duration<double>(t1 - t0).count()},
                 {"samples", result.waveform.samples.size()},
                 {"wav", out_wav}};
  if (!transcriber.empty()) {
    std::string cmd = transcriber + " " + out_wav;
    std::string transcript;
    if (FILE* pipe = popen(cmd.c_str(), "r")) {
      char buf[4096];
      while (fgets(buf, sizeof(buf), pipe)) transcript += buf;
      int rc = pclose(pipe);
      while (!transcript.empty() && (transcript.back() == '\n' || transcript.back() == '\r'))
        transcript.pop_back();
      if (rc != 0) throw TrainError("transcriber failed with exit code " + std::to_string(rc));
    } else {
      throw TrainError("cannot launch transcriber: " + cmd);
    }
    report["transcript"] = transcript;
  }
  std::cout << report.dump() << std::endl;
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, uint64_t seed, long max_steps,
             long limit) {
  auto lm = load_model(ckpt);
  auto ingest = ingest_directory(data_dir, data_dir + "/vocab.txt");
  for (const auto& s : ingest.skipped) std::cerr << "skipped " << s << std::endl;
  auto& utts = ingest.utterances;
  if (limit > 0 && static_cast<long>(utts.size()) > limit) utts.resize(limit);
  SynthesisConfig cfg;
  cfg.temperature = lm.model->config().temperature;
  cfg.seed = seed;
  cfg.max_steps = max_steps;
  auto report = evaluate(*lm.model, utts, cfg);
  json j = {{"mcd", report.mcd},
            {"msd", report.msd},
            {"mean_nll_per_dim", report.mean_nll_per_dim},
            {"stop_success_rate", report.stop_success_rate},
            {"n_utterances", report.n_utterances}};
  std::cout << j.dump() << std::endl;
  return 0;
}

// Noise-free dequantization midpoint; feature extraction wants a plain signal.
Waveform wav_to_waveform(const std::string& path) {
  auto [pcm, rate] = load_wav(path);
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(pcm.size());
  for (size_t i = 0; i < pcm.size(); ++i)
    w.samples[i] = 2.0 * (static_cast<double>(pcm[i]) + 32768.0 + 0.5) / 65536.0 - 1.0;
  return w;
}

int cmd_features(const std::string& wav_path, const std::string& out_path, bool magnitude_out) {
  auto w = wav_to_waveform(wav_path);
  StftGeometry geo;
  geo.sample_rate = w.sample_rate;
  json report;
  if (magnitude_out) {
    auto mag = magnitude(stft(w.samples, geo));
    write_feature_dump(mag.frames, mag.geometry, out_path);
    report = {{"frames", mag.frames.size()}, {"dim", mag.frames.empty() ? 0 : mag.frames[0].size()}};
  } else {
    auto mel = log_mel(w, geo);
    write_feature_dump(mel.frames, mel.geometry, out_path);
    report = {{"frames", mel.frames.size()}, {"dim", kMelChannels}};
  }
  report["out"] = out_path;
  std::cout << report.dump() << std::endl;
  return 0;
}

int cmd_vocode(const std::string& ckpt, const std::string& mel_path, const std::string& out_wav,
               bool temp_given, double temperature, bool use_griffin_lim, int iterations,
               uint64_t seed) {
  auto [frames, geo] = read_feature_dump(mel_path);
  Rng rng(seed);
  Waveform w;
  if (use_griffin_lim) {
    MagnitudeSpectrogram mag{frames, geo};
    w = vocode_pipeline(mag, rng, iterations);
  } else {
    if (ckpt.empty())
      throw std::invalid_argument("vocode: --ckpt is required unless --griffin-lim is set");
    auto header = read_checkpoint_header(ckpt);
    if (!header.config.contains("vocoder"))
      throw std::invalid_argument("vocode: checkpoint does not hold a vocoder");
    auto vcfg = vocoder_config_from_json(header.config.at("vocoder"), "checkpoint config");
    ParamRegistry<Scalar> reg;
    Rng init(0);
    Vocoder<Scalar> voc(reg, vcfg, init);
    AdamState<Scalar> opt;
    load_checkpoint(ckpt, reg, opt);
    LogMelSpectrogram mel;
    mel.frames = std::move(frames);
    mel.geometry = geo;
    w = vocode_pipeline(voc, mel, temp_given ? temperature : vcfg.temperature, rng);
  }
  save_wav(w, out_wav);
  json report = {{"samples", w.samples.size()}, {"sample_rate", w.sample_rate}, {"wav", out_wav}};
  std::cout << report.dump() << std::endl;
  return 0;
}

Waveform bench_tone(int rate, double duration) {
  Waveform w;
  w.sample_rate = rate;
  long n = static_cast<long>(std::lround(duration * rate));
  w.samples.resize(n);
  for (long i = 0; i < n; ++i) w.samples[i] = 0.5 * std::sin(2.0 * M_PI * 220.0 * i / rate);
  return w;
}

template <class F>
BenchRow bench_timed(const std::string& variant, int trials, F&& run) {
  run(0);  // warm-up
  BenchRow row;
  row.variant = variant;
  row.trials = trials;
  std::vector<double> times;
  for (int i = 0; i < trials; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    run(i + 1);
    times.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  for (double t : times) row.mean_s += t;
  row.mean_s /= trials;
  for (double t : times) row.std_s += (t - row.mean_s) * (t - row.mean_s);
  row.std_s = trials > 1 ? std::sqrt(row.std_s / (trials - 1)) : 0.0;
  return row;
}

int cmd_bench(const std::string& ckpt_dir, int trials, double duration, const std::string& text,
              const std::string& out_csv, bool include_griffin_lim, uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("--trials must be >= 1");
  std::vector<fs::path> ckpts;
  for (const auto& e : fs::directory_iterator(ckpt_dir))
    if (e.is_regular_file() && e.path().extension() == ".ckpt") ckpts.push_back(e.path());
  std::sort(ckpts.begin(), ckpts.end());
  if (ckpts.empty()) throw TrainError("no .ckpt files in " + ckpt_dir);

  std::vector<BenchRow> rows;
  int rate = 0;
  for (const auto& path : ckpts) {
    auto header = read_checkpoint_header(path.string());
    if (header.config.contains("vocoder")) {
      // vocoder pipeline: fixed-duration mel inverted in one flow pass
      auto vcfg = vocoder_config_from_json(header.config.at("vocoder"), "checkpoint config");
      ParamRegistry<Scalar> reg;
      Rng init(0);
      Vocoder<Scalar> voc(reg, vcfg, init);
      AdamState<Scalar> opt;
      load_checkpoint(path.string(), reg, opt);
      auto mel = log_mel(bench_tone(vcfg.sample_rate, duration), vcfg.mel_geometry());
      rows.push_back(bench_timed(path.stem().string(), trials, [&](int i) {
        Rng rng(seed + i);
        vocode_pipeline(voc, mel, vcfg.temperature, rng);
      }));
      rate = vcfg.sample_rate;
      continue;
    }
    auto lm = load_model(path.string());
    std::string t = text;
    if (t.empty()) {
      const std::string& vocab = lm.model->config().vocab;
      for (int i = 0; i < 90; ++i) t += vocab[i % (vocab.size() - 1)];
    }
    auto tokens = tokenize(t, lm.model->config().vocab);
    rows.push_back(bench_one(path.stem().string(), *lm.model, tokens, trials, duration, seed));
    rate = lm.model->config().sample_rate;
  }
  if (include_griffin_lim) {
    if (rate == 0) rate = 24000;
    StftGeometry geo;
    geo.sample_rate = rate;
    auto mag = magnitude(stft(bench_tone(rate, duration).samples, geo));
    rows.push_back(bench_timed("griffin-lim", trials, [&](int i) {
      Rng rng(seed + i);
      vocode_pipeline(mag, rng, 100);
    }));
  }
  std::string csv = bench_csv(rows);
  std::cout << csv;
  if (!out_csv.empty()) {
    std::ofstream f(out_csv);
    if (!f) throw TrainError("cannot write " + out_csv);
    f << csv;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"block-autoregressive waveform synthesis toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global --seed/--threads usable after the subcommand
  uint64_t seed = 0;
  int threads = threads_from_env(1);
  bool seed_given = false;
  app.add_option("--seed", seed, "global rng seed")->each([&](const std::string&) {
    seed_given = true;
  });
  app.add_option("--threads", threads, "worker threads (1 = deterministic)");

  auto* toy = app.add_subcommand("toy-data", "generate a synthetic token-to-tone corpus");
  std::string toy_out;
  long toy_n = 0;
  int toy_rate = 8000;
  toy->add_option("--out", toy_out, "output directory")->required();
  toy->add_option("--n", toy_n, "number of utterances")->required();
  toy->add_option("--sample-rate", toy_rate, "sample rate");

  auto* train = app.add_subcommand("train", "train a model");
  std::string train_config, train_data, train_out;
  bool train_resume = false;
  long train_steps = 0;
  train->add_option("--config", train_config, "JSON config file")->required();
  train->add_option("--data", train_data, "corpus directory")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_flag("--resume", train_resume, "resume from existing checkpoint");
  train->add_option("--steps", train_steps, "override train.max_steps");

  auto* synth = app.add_subcommand("synth", "synthesize from text");
  std::string synth_ckpt, synth_text, synth_out, synth_transcriber;
  double synth_temp = 0.7, synth_stop = 0.5;
  long synth_max_steps = 400;
  bool synth_temp_given = false;
  synth->add_option("--ckpt", synth_ckpt, "checkpoint file")->required();
  synth->add_option("--text", synth_text, "input token string")->required();
  synth->add_option("--out", synth_out, "output wav")->required();
  synth->add_option("--temperature", synth_temp, "sampling temperature")
      ->each([&](const std::string&) { synth_temp_given = true; });
  synth->add_option("--max-steps", synth_max_steps, "decoder step cap");
  synth->add_option("--stop-threshold", synth_stop, "stop token threshold");
  synth->add_option("--transcriber", synth_transcriber,
                    "external command run as 'CMD out.wav'; stdout becomes the transcript");

  auto* feats = app.add_subcommand("features", "extract log-mel (or magnitude) features to a dump");
  std::string feat_wav, feat_out;
  bool feat_magnitude = false;
  feats->add_option("--wav", feat_wav, "input wav")->required();
  feats->add_option("--out", feat_out, "output feature dump path")->required();
  feats->add_flag("--magnitude", feat_magnitude, "write the magnitude spectrogram instead");

  auto* vocode = app.add_subcommand("vocode", "invert a feature dump to audio");
  std::string voc_ckpt, voc_mel, voc_out;
  double voc_temp = 0.7;
  bool voc_temp_given = false, voc_gl = false;
  int voc_iters = 100;
  vocode->add_option("--ckpt", voc_ckpt, "vocoder checkpoint file");
  vocode->add_option("--mel", voc_mel, "feature dump (log-mel, or magnitude with --griffin-lim)")
      ->required();
  vocode->add_option("--out", voc_out, "output wav")->required();
  vocode->add_option("--temperature", voc_temp, "sampling temperature")
      ->each([&](const std::string&) { voc_temp_given = true; });
  vocode->add_flag("--griffin-lim", voc_gl, "phase-reconstruction path, no checkpoint needed");
  vocode->add_option("--iterations", voc_iters, "griffin-lim iterations");

  auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint against a corpus");
  std::string eval_ckpt, eval_data;
  long eval_max_steps = 400, eval_limit = 0;
  evalc->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  evalc->add_option("--data", eval_data, "corpus directory")->required();
  evalc->add_option("--max-steps", eval_max_steps, "decoder step cap");
  evalc->add_option("--limit", eval_limit, "evaluate at most this many utterances");

  auto* bench = app.add_subcommand("bench", "generation-speed benchmark over checkpoints");
  std::string bench_dir, bench_text, bench_out;
  int bench_trials = 5;
  double bench_duration = 5.0;
  bench->add_option("--ckpt-dir", bench_dir, "directory of .ckpt files")->required();
  bench->add_option("--trials", bench_trials, "timed trials per variant");
  bench->add_option("--duration", bench_duration, "seconds of audio per trial");
  bench->add_option("--text", bench_text, "input token string (default: 90 tokens)");
  bench->add_option("--out", bench_out, "also write the CSV here");
  bool bench_gl = false;
  bench->add_flag("--griffin-lim", bench_gl, "add a griffin-lim pipeline row");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  global_threads() = std::max(1, threads);

  try {
    if (app.got_subcommand(toy))
      return cmd_toy_data(toy_out, toy_n, seed, toy_rate);
    if (app.got_subcommand(train))
      return cmd_train(train_config, train_data, train_out, train_resume, train_steps, seed_given,
                       seed);
    if (app.got_subcommand(synth))
      return cmd_synth(synth_ckpt, synth_text, synth_out, synth_temp_given, synth_temp, seed,
                       synth_max_steps, synth_stop, synth_transcriber);
    if (app.got_subcommand(feats))
      return cmd_features(feat_wav, feat_out, feat_magnitude);
    if (app.got_subcommand(vocode))
      return cmd_vocode(voc_ckpt, voc_mel, voc_out, voc_temp_given, voc_temp, voc_gl, voc_iters,
                        seed);
    if (app.got_subcommand(evalc))
      return cmd_eval(eval_ckpt, eval_data, seed, eval_max_steps, eval_limit);
    if (app.got_subcommand(bench))
      return cmd_bench(bench_dir, bench_trials, bench_duration, bench_text, bench_out, bench_gl,
                       seed);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 2;
}
