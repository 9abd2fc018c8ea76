#pragma once

// Optimization loop and the ablation grid driver.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowslm/corpus.hpp"
#include "flowslm/eval.hpp"
#include "flowslm/model.hpp"

namespace flowslm {

enum class Schedule { kConstant, kCosine };
std::string to_string(Schedule s);
Schedule schedule_from_string(const std::string& s);

struct TrainConfig {
  int steps = 3000;
  int batch_utterances = 32;
  double lr_peak = 1e-3;
  int warmup_steps = 150;
  Schedule schedule = Schedule::kCosine;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.95;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  int log_every = 10;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Learning rate used by update `step` (0-based): linear warmup to lr_peak
/// over warmup_steps, then constant or cosine decay to 0 at `steps`.
double learning_rate(const TrainConfig& c, int step);

/// Utterance indices of batch `step`: epochs are seeded permutations and the
/// final partial batch of an epoch is kept.
std::vector<int> batch_indices(std::uint64_t seed, int step, int batch_size, int corpus_size);
std::uint64_t noise_seed(std::uint64_t seed, int step, int slot);

/// Scales `grad` in place so its global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(ParamSet<float>& grad, double max_norm);

struct AdamState {
  ParamSet<float> m, v;
  std::int64_t t = 0;

  explicit AdamState(const std::shared_ptr<const ParamLayout>& layout) : m(layout), v(layout) {}
};

/// Decoupled weight decay (only on tensors flagged for decay) then Adam.
void adamw_step(ParamSet<float>& params, const ParamSet<float>& grad, AdamState& state, double lr,
                const TrainConfig& c);

struct MetricRecord {
  int step = 0;  // number of updates completed
  double sem_loss = 0.0;
  double cfm_loss = 0.0;
  double total = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;

  nlohmann::json to_json() const;
};

struct TrainOptions {
  /// When set: metrics.jsonl, timing.jsonl, checkpoints/ and model.ckpt go here.
  std::optional<std::filesystem::path> out_dir;
  /// Continue from this checkpoint (must carry optimizer state).
  std::optional<std::filesystem::path> resume_from;
  std::function<void(const MetricRecord&)> on_log;
  /// Merged into the metadata of every checkpoint written.
  nlohmann::json extra_meta = nlohmann::json::object();
  /// Stamped on every metrics.jsonl line when non-empty.
  std::string config_hash;
};

struct TrainResult {
  FlowSlm<float> model;
  std::vector<MetricRecord> log;
  std::int64_t steps_done = 0;
};

TrainResult train(const ModelConfig& model_config, const TrainConfig& config,
                  const std::vector<Utterance>& corpus, const TrainOptions& options = {});

/// Writes params, Adam moments and the step counter.
Checkpoint make_train_checkpoint(const FlowSlm<float>& model, const AdamState& adam,
                                 const TrainConfig& config, std::int64_t step);

struct AblationGrid {
  std::vector<InputMode> input_modes{InputMode::kToken, InputMode::kVector};
  std::vector<int> k_values{1, 4};
  std::vector<bool> cfm_enabled{false, true};

  void validate() const;
  struct Cell {
    InputMode input_mode;
    int k;
    bool cfm;
    std::string name() const;
  };
  /// Cartesian product in (input, cfm, k) order, without token-input cells
  /// that would carry a CFM head.
  std::vector<Cell> cells() const;
};

struct AblationRow {
  AblationGrid::Cell cell;
  bool ok = false;
  std::string error;
  EvalReport report;
  nlohmann::json config;  // model and train configs of the cell
};

struct AblationInputs {
  const std::vector<Utterance>* train = nullptr;
  const std::vector<Utterance>* heldout = nullptr;
  const MinimalPairSet* lexical = nullptr;  // may be null or empty
  const MinimalPairSet* syntactic = nullptr;
};

/// Trains and evaluates one model per cell. A failing cell is recorded and
/// the remaining cells still run.
std::vector<AblationRow> run_ablation(const AblationGrid& grid, const ModelConfig& base_model,
                                      const TrainConfig& train_config, const AblationInputs& inputs,
                                      const std::function<void(const AblationRow&)>& on_row = nullptr);

/// Evaluates a trained model on the ablation metrics (CE, paired accuracies).
EvalReport evaluate_cell(const FlowSlm<float>& model, const AblationInputs& inputs);

nlohmann::json ablation_table_json(const std::vector<AblationRow>& rows);

}  // namespace flowslm
