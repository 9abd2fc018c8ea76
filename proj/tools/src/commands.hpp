#pragma once

// The five pipeline verbs. Each returns normally when every artifact was
// written and validated; failures throw.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "run_config.hpp"

namespace flowslm::cli {

struct CommandContext {
  RunConfig config;
  std::filesystem::path out;  // run directory
  bool verbose = false;
  bool plot = false;
  std::optional<std::filesystem::path> data_dir;      // default: <out>/data
  std::optional<std::filesystem::path> checkpoint;    // default: <out>/train/model.ckpt
  std::optional<std::filesystem::path> resume;
  std::optional<std::filesystem::path> continuations; // eval: score these instead of generating
  bool ground_truth = false;                          // eval: held-out suffixes as continuations
};

/// Thrown when artifacts were produced by a different configuration.
class HashMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  nlohmann::json manifest;
  GrammarSpec grammar;
  RenderSpec render;
  std::vector<Utterance> train, heldout;
  MinimalPairSet lexical, syntactic, consistency;
  std::string hash() const { return manifest.at("config_hash").get<std::string>(); }
};

Dataset load_dataset(const std::filesystem::path& dir);

void cmd_make_data(const CommandContext& ctx);
void cmd_train(const CommandContext& ctx);
void cmd_generate(const CommandContext& ctx);
void cmd_eval(const CommandContext& ctx);
void cmd_ablate(const CommandContext& ctx);

}  // namespace flowslm::cli
