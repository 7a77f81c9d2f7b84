#pragma once

// Full model: encoder + decoder driving a conditional flow over waveform
// blocks. ModelConfig carries every switch the ablation table needs and
// round-trips through JSON with unknown-key rejection.

#include "waveflow/flow.hpp"
#include "waveflow/seq2seq.hpp"

#include <nlohmann/json.hpp>

#include <set>
#include <string>

namespace waveflow {

struct ModelConfig {
  int sample_rate = 8000;
  int vocab_size = 9;
  std::string vocab = "ABCDEFGH_";  // character at index i maps to token id i
  int block_base = 320;  // K/R, the autoregressive feedback width
  int r = 1;             // block multiplier; K = block_base * r

  // flow
  int frame_length = 10;
  int stages = 3;
  int steps_per_stage = 4;
  int coupling_channels = 64;
  int position_dim = 16;
  double temperature = 0.7;

  // seq2seq
  int embedding_dim = 128;
  int bank_max_width = 8;
  int bank_channels = 64;
  int highway_layers = 2;
  int gru_units = 64;
  int prenet_units1 = 128;
  int prenet_units2 = 64;
  double prenet_dropout = 0.5;
  int attention_units = 64;
  int attention_filters = 16;
  int attention_kernel = 31;
  int attention_rnn_units = 128;
  int decoder_units = 128;
  int projection_dim = 128;

  // ablation switches
  bool use_preemphasis = true;
  bool use_position_embeddings = true;
  bool use_skip_connection = true;
  bool unconditional = false;  // flow only, fixed null conditioning

  int block_size() const { return block_base * r; }

  FlowConfig flow_config() const {
    FlowConfig f;
    f.block_size = block_size();
    f.frame_length = frame_length;
    f.stages = stages;
    f.steps_per_stage = steps_per_stage;
    f.coupling_channels = coupling_channels;
    f.position_dim = use_position_embeddings ? position_dim : 0;
    f.temperature = temperature;
    return f;
  }

  Seq2SeqConfig seq2seq_config() const {
    Seq2SeqConfig s;
    s.vocab_size = vocab_size;
    s.embedding_dim = embedding_dim;
    s.bank_max_width = bank_max_width;
    s.bank_channels = bank_channels;
    s.highway_layers = highway_layers;
    s.gru_units = gru_units;
    s.prenet_units1 = prenet_units1;
    s.prenet_units2 = prenet_units2;
    s.prenet_dropout = prenet_dropout;
    s.attention_units = attention_units;
    s.attention_filters = attention_filters;
    s.attention_kernel = attention_kernel;
    s.attention_rnn_units = attention_rnn_units;
    s.decoder_units = decoder_units;
    s.projection_dim = projection_dim;
    s.ar_input = block_base;
    s.skip_connection = use_skip_connection;
    return s;
  }

  int conditioning_dim() const {
    return unconditional ? 0 : seq2seq_config().conditioning_dim();
  }

  void validate() const {
    if (sample_rate <= 0) throw std::invalid_argument("model config: bad sample_rate");
    if (vocab_size < 1 && !unconditional)
      throw std::invalid_argument("model config: vocab_size must be positive");
    if (block_base <= 0 || r < 1) throw std::invalid_argument("model config: bad block size");
    if (!vocab.empty() && static_cast<int>(vocab.size()) != vocab_size)
      throw std::invalid_argument("model config: vocab string length != vocab_size");
    flow_config().validate();
  }
};

// clang-format off
#define WF_MODEL_FIELDS(X) \
  X(sample_rate) X(vocab_size) X(vocab) X(block_base) X(r) \
  X(frame_length) X(stages) X(steps_per_stage) X(coupling_channels) \
  X(position_dim) X(temperature) \
  X(embedding_dim) X(bank_max_width) X(bank_channels) X(highway_layers) \
  X(gru_units) X(prenet_units1) X(prenet_units2) X(prenet_dropout) \
  X(attention_units) X(attention_filters) X(attention_kernel) \
  X(attention_rnn_units) X(decoder_units) X(projection_dim) \
  X(use_preemphasis) X(use_position_embeddings) X(use_skip_connection) \
  X(unconditional)
// clang-format on

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  nlohmann::json j;
#define X(f) j[#f] = c.f;
  WF_MODEL_FIELDS(X)
#undef X
  return j;
}

// Rejects unknown keys so config typos fail loudly; missing keys keep defaults.
inline ModelConfig model_config_from_json(const nlohmann::json& j,
                                          const std::string& context = "model config") {
  if (!j.is_object()) throw std::invalid_argument(context + ": expected a JSON object");
  std::set<std::string> known;
#define X(f) known.insert(#f);
  WF_MODEL_FIELDS(X)
#undef X
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw std::invalid_argument(context + ": unknown key '" + it.key() + "'");
  ModelConfig c;
#define X(f) if (j.contains(#f)) j.at(#f).get_to(c.f);
  WF_MODEL_FIELDS(X)
#undef X
  return c;
}

#undef WF_MODEL_FIELDS

template <class S>
class WaveTacotron {
 public:
  explicit WaveTacotron(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    if (!cfg_.unconditional) {
      encoder_ = Encoder<S>(params_, "encoder", cfg_.seq2seq_config(), rng);
      decoder_ = Decoder<S>(params_, "decoder", cfg_.seq2seq_config(), rng);
    }
    flow_ = Flow<S>(params_, "flow", cfg_.flow_config(), cfg_.conditioning_dim(), rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamRegistry<S>& params() { return params_; }
  const ParamRegistry<S>& params() const { return params_; }
  const Encoder<S>& encoder() const { return encoder_; }
  const Decoder<S>& decoder() const { return decoder_; }
  const Flow<S>& flow() const { return flow_; }

  ConditioningFrames<S> upsample(Tape<S>& tape, const Var<S>& c_t) const {
    return upsample_conditioning(tape, c_t, flow_.config());
  }

  // Null conditioning vector for the unconditional mode.
  ConditioningFrames<S> null_conditioning(Tape<S>& tape) const {
    return upsample_conditioning<S>(tape, nullptr, flow_.config());
  }

 private:
  ModelConfig cfg_;
  ParamRegistry<S> params_;
  Encoder<S> encoder_;
  Decoder<S> decoder_;
  Flow<S> flow_;
};

}  // namespace waveflow
