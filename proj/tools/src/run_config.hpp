#pragma once

// Run configuration: one INI file with sections for every stage. Every key
// has a default; the resolved file (defaults expanded) is written next to
// each command's outputs.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowslm/corpus.hpp"
#include "flowslm/model.hpp"
#include "flowslm/sampler.hpp"
#include "flowslm/trainer.hpp"

namespace flowslm::cli {

struct DataConfig {
  int n_train = 5000;
  int n_heldout = 500;
  int n_lexical_pairs = 400;
  int n_syntactic_pairs = 400;
  int n_consistency_pairs = 200;
  int shard_size = 1000;
};

struct EvalConfig {
  int n_prompts = 100;
  int continuations_per_prompt = 4;
  int prompt_frames = 12;
  int n_consistency_pairs = 200;
  bool run_generation = true;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "runs/default";
  GrammarOptions grammar;
  RenderOptions render;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  GenerationConfig generation;
  EvalConfig eval;
  AblationGrid ablation;

  /// Applies `section.key=value` overrides on top of the loaded values.
  static RunConfig load(const std::filesystem::path* path, const std::vector<std::string>& overrides);
  void validate() const;
  void write_ini(const std::filesystem::path& path) const;
  std::string to_ini() const;
  nlohmann::json to_json() const;

  /// Named substreams of the root seed.
  std::uint64_t stream(const char* name) const;
};

}  // namespace flowslm::cli
