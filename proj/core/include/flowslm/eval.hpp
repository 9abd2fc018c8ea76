#pragma once

// Metrics: paired-likelihood accuracy, held-out cross-entropy, grammar
// perplexity of continuations, speaker similarity, Frechet distance and a
// flow-loss acoustic consistency score.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowslm/corpus.hpp"
#include "flowslm/model.hpp"
#include "flowslm/sampler.hpp"

namespace flowslm {

struct EvalReport {
  std::map<std::string, double> metrics;
  std::map<std::string, std::int64_t> counts;
  std::string config_hash;
  std::uint64_t seed = 0;

  void set(const std::string& name, double value, std::int64_t count) {
    metrics[name] = value;
    counts[name] = count;
  }
  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

/// 16 hex digits of FNV-1a over the compact JSON dump.
std::string hash_json(const nlohmann::json& j);
/// Hash of the raw parameter bytes.
std::string hash_params(const ParamSet<float>& p);

/// Sum over frames of log P(z_m | c_<m) from head 0, teacher-forced.
double sequence_logprob(const FlowSlm<float>& model, const Utterance& utt);

/// Mean per-token negative log-likelihood (head 0) over the utterances.
double heldout_ce(const FlowSlm<float>& model, const std::vector<Utterance>& utts);

using SequenceScorer = std::function<double(const Utterance&)>;
/// Fraction of pairs whose positive scores above the negative; ties count half.
double paired_accuracy(const MinimalPairSet& pairs, const SequenceScorer& score);
double paired_accuracy(const FlowSlm<float>& model, const MinimalPairSet& pairs);

/// exp(-mean per-token log-probability) of the generated tokens given their
/// prompts under the grammar.
double gen_ppl(const std::vector<Continuation>& continuations, const GrammarScorer& scorer);
/// Per-token grammar perplexity of complete utterances.
double corpus_ppl(const std::vector<Utterance>& utts, const GrammarScorer& scorer);

double speaker_similarity(const MatF& prompt_frames, const MatF& continuation_frames,
                          const RenderSpec& render);

/// Squared 2-Wasserstein distance between Gaussians fitted to the rows of
/// each matrix (one sample per row).
double frechet_distance(const MatD& a, const MatD& b);

/// Mean teacher-forced CFM loss per frame with t on 8 stratified midpoints
/// and prior draws from `seed`.
double mean_flow_loss(const FlowSlm<float>& model, const Utterance& utt, std::uint64_t seed);
/// 1 if the consistent member has the lower flow loss, 0.5 on a tie, else 0.
double acoustic_consistency_score(const FlowSlm<float>& model, const MinimalPair& pair,
                                  std::uint64_t seed);

}  // namespace flowslm
