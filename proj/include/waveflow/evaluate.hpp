#pragma once

// Checkpoint evaluation: synthesize the eval set, score MCD/MSD against the
// references, report teacher-forced NLL and stop-token success.

#include "waveflow/metrics.hpp"
#include "waveflow/synthesis.hpp"
#include "waveflow/trainer.hpp"

#include <vector>

namespace waveflow {

struct EvalReport {
  double mcd = 0.0;
  double msd = 0.0;
  double mean_nll_per_dim = 0.0;
  double stop_success_rate = 0.0;
  long n_utterances = 0;
};

template <class S>
inline EvalReport evaluate(const WaveTacotron<S>& model, const std::vector<Utterance>& eval_set,
                           const SynthesisConfig& scfg, int n_pad = 2) {
  if (eval_set.empty()) throw TrainError("evaluate: empty eval set");
  EvalReport report;
  report.n_utterances = static_cast<long>(eval_set.size());
  Rng rng(scfg.seed);
  for (size_t i = 0; i < eval_set.size(); ++i) {
    const auto& u = eval_set[i];
    Waveform reference = u.levels.empty()
                             ? u.waveform
                             : dequantize(u.levels, u.waveform.sample_rate, rng);
    SynthesisConfig per = scfg;
    per.seed = scfg.seed + i;
    auto syn = synthesize(model, u.tokens, per);
    report.mcd += mcd(reference, syn.waveform);
    report.msd += msd(reference, syn.waveform);
    if (syn.stopped_by_token) report.stop_success_rate += 1.0;
  }
  report.mcd /= report.n_utterances;
  report.msd /= report.n_utterances;
  report.stop_success_rate /= report.n_utterances;
  Rng nll_rng(scfg.seed);
  report.mean_nll_per_dim =
      eval_losses(model, eval_set, nll_rng, n_pad).flow_nll_per_dim;
  return report;
}

}  // namespace waveflow
