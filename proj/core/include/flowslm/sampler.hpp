#pragma once

// Autoregressive generation: per frame, sample k tokens from the semantic
// heads, integrate the CFM head's ODE for the frame, feed the frame back.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowslm/common.hpp"
#include "flowslm/flow.hpp"
#include "flowslm/model.hpp"
#include "flowslm/rng.hpp"

namespace flowslm {

struct GenerationConfig {
  double top_p = 0.95;
  double silence_penalty = 10.0;
  double cfg_scale = 0.3;
  double prior_temperature = 0.8;
  SolverSpec solver{};
  int max_frames = 125;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static GenerationConfig from_json(const nlohmann::json& j);
};

enum class StopReason { kEos, kMaxFrames };
std::string to_string(StopReason r);
StopReason stop_reason_from_string(const std::string& s);

struct Continuation {
  std::vector<int> prompt_tokens;  // needed to score the continuation in context
  std::vector<int> tokens;
  MatF embeddings;
  int prompt_len = 0;
  StopReason stopped_by = StopReason::kMaxFrames;
};

/// Work done by the sampler; used to check the one-advance-per-frame property.
struct SamplerCounters {
  std::int64_t frames = 0;
  std::int64_t context_extensions = 0;
  std::int64_t cfm_evaluations = 0;
};

/// The renormalized nucleus distribution after the silence penalty.
std::vector<double> nucleus_distribution(const std::vector<double>& logits, double top_p,
                                         double silence_penalty);
int nucleus_sample(const std::vector<double>& logits, double top_p, double silence_penalty,
                   Rng& rng);

/// One frame by ODE integration from a prior draw.
VecD generate_frame(const FlowSlm<float>& model, const RowVec<float>& context,
                    const std::vector<int>& tokens, const GenerationConfig& config, Rng& rng,
                    SamplerCounters* counters = nullptr);

/// Renders frames for a full token stream. Used for models without a CFM
/// head, whose output is tokens only.
using FrameRenderer = std::function<MatF(const std::vector<int>& tokens)>;

Continuation continue_prompt(const FlowSlm<float>& model, const std::vector<int>& prompt_tokens,
                             const MatF& prompt_frames, const GenerationConfig& config, Rng& rng,
                             SamplerCounters* counters = nullptr,
                             const FrameRenderer& renderer = nullptr);

struct ContinuationSet {
  GenerationConfig config;
  std::vector<std::string> prompt_ids;
  std::vector<Continuation> continuations;
  nlohmann::json meta = nlohmann::json::object();  // provenance, stored verbatim
};

/// Writes `<dir>/continuations.shard` (corpus shard format) and
/// `<dir>/continuations.json` (config, prompt ids, prompt tokens, stop reasons).
void write_continuations(const std::filesystem::path& dir, const ContinuationSet& set, int attr_dim);
ContinuationSet read_continuations(const std::filesystem::path& dir);

}  // namespace flowslm
