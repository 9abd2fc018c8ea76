#include "flowslm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "flowslm/rng.hpp"

namespace flowslm {

std::string to_string(Schedule s) { return s == Schedule::kCosine ? "cosine" : "constant"; }

Schedule schedule_from_string(const std::string& s) {
  if (s == "cosine") return Schedule::kCosine;
  if (s == "constant") return Schedule::kConstant;
  throw ConfigError("unknown schedule '" + s + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (steps < 1) fail("steps must be >= 1");
  if (batch_utterances < 1) fail("batch_utterances must be >= 1");
  if (!(lr_peak >= 0.0)) fail("lr_peak must be >= 0");
  if (warmup_steps < 0 || warmup_steps >= steps) fail("warmup_steps must be in [0, steps)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail("Adam betas must be in [0,1)");
  }
  if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (!(grad_clip_norm > 0.0)) fail("grad_clip_norm must be > 0");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (log_every < 1) fail("log_every must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"steps", steps},
          {"batch_utterances", batch_utterances},
          {"lr_peak", lr_peak},
          {"warmup_steps", warmup_steps},
          {"schedule", to_string(schedule)},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_eps", adam_eps},
          {"weight_decay", weight_decay},
          {"grad_clip_norm", grad_clip_norm},
          {"seed", seed},
          {"checkpoint_every", checkpoint_every},
          {"log_every", log_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.steps = j.at("steps").get<int>();
    c.batch_utterances = j.at("batch_utterances").get<int>();
    c.lr_peak = j.at("lr_peak").get<double>();
    c.warmup_steps = j.at("warmup_steps").get<int>();
    c.schedule = schedule_from_string(j.at("schedule").get<std::string>());
    c.adam_beta1 = j.at("adam_beta1").get<double>();
    c.adam_beta2 = j.at("adam_beta2").get<double>();
    c.adam_eps = j.at("adam_eps").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.grad_clip_norm = j.at("grad_clip_norm").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.checkpoint_every = j.at("checkpoint_every").get<int>();
    c.log_every = j.at("log_every").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config json: ") + e.what());
  }
  c.validate();
  return c;
}

double learning_rate(const TrainConfig& c, int step) {
  if (step < c.warmup_steps) return c.lr_peak * (step + 1) / c.warmup_steps;
  if (c.schedule == Schedule::kConstant) return c.lr_peak;
  const double progress =
      static_cast<double>(step - c.warmup_steps) / static_cast<double>(c.steps - c.warmup_steps);
  return c.lr_peak * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(1.0, progress)));
}

std::vector<int> batch_indices(std::uint64_t seed, int step, int batch_size, int corpus_size) {
  FLOWSLM_REQUIRE(corpus_size >= 1 && batch_size >= 1 && step >= 0, "batch_indices: bad arguments");
  const int per_epoch = (corpus_size + batch_size - 1) / batch_size;
  const int epoch = step / per_epoch;
  const int b = step % per_epoch;
  std::vector<int> perm(corpus_size);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = Rng::derive(splitmix64(seed ^ 0x5eedda7aULL), static_cast<std::uint64_t>(epoch));
  for (int i = corpus_size - 1; i > 0; --i) {
    std::swap(perm[i], perm[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  }
  const int lo = b * batch_size;
  const int hi = std::min(corpus_size, lo + batch_size);
  return {perm.begin() + lo, perm.begin() + hi};
}

std::uint64_t noise_seed(std::uint64_t seed, int step, int slot) {
  return splitmix64(splitmix64(splitmix64(seed ^ 0x6e6f697365ULL) ^ static_cast<std::uint64_t>(step)) ^
                    static_cast<std::uint64_t>(slot));
}

double clip_grad_norm(ParamSet<float>& grad, double max_norm) {
  double sq = 0.0;
  for (Eigen::Index i = 0; i < grad.flat().size(); ++i) {
    const double g = grad.flat()[i];
    sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) grad.flat() *= static_cast<float>(max_norm / (norm + 1e-12));
  return norm;
}

void adamw_step(ParamSet<float>& params, const ParamSet<float>& grad, AdamState& state, double lr,
                const TrainConfig& c) {
  ++state.t;
  const double b1 = c.adam_beta1, b2 = c.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  const auto& specs = params.layout().specs();
  float* p = params.flat().data();
  const float* g = grad.flat().data();
  float* m = state.m.flat().data();
  float* v = state.v.flat().data();
  for (const TensorSpec& s : specs) {
    const float decay = s.decay ? static_cast<float>(lr * c.weight_decay) : 0.0f;
    for (std::size_t i = s.offset; i < s.offset + s.size(); ++i) {
      m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * g[i]);
      v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * static_cast<double>(g[i]) * g[i]);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= decay * p[i];
      p[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + c.adam_eps));
    }
  }
}

nlohmann::json MetricRecord::to_json() const {
  return {{"step", step},           {"sem_loss", sem_loss}, {"cfm_loss", cfm_loss},
          {"total", total},         {"lr", lr},             {"grad_norm", grad_norm},
          {"workers", 1}};
}

Checkpoint make_train_checkpoint(const FlowSlm<float>& model, const AdamState& adam,
                                 const TrainConfig& config, std::int64_t step) {
  Checkpoint c = make_checkpoint(model, static_cast<std::uint64_t>(step));
  store_group(c, "adam_m", adam.m);
  store_group(c, "adam_v", adam.v);
  c.meta = {{"train", config.to_json()}, {"adam_t", adam.t}};
  return c;
}

namespace {

std::string step_name(std::int64_t step) {
  std::ostringstream os;
  os << "step_";
  os.width(7);
  os.fill('0');
  os << step << ".ckpt";
  return os.str();
}

// Keeps the records of a previous run up to `step` so a resumed run's log
// matches an uninterrupted one.
void truncate_log(const std::filesystem::path& path, std::int64_t step) {
  std::vector<std::string> keep;
  {
    std::ifstream is(path);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (!j.is_discarded() && j.value("step", std::int64_t{0}) <= step) keep.push_back(line);
    }
  }
  std::ofstream os(path, std::ios::trunc);
  for (const auto& l : keep) os << l << "\n";
}

}  // namespace

TrainResult train(const ModelConfig& model_config, const TrainConfig& config,
                  const std::vector<Utterance>& corpus, const TrainOptions& options) {
  config.validate();
  FLOWSLM_REQUIRE(!corpus.empty(), "train: empty corpus");
  TrainResult result{FlowSlm<float>(model_config), {}, 0};
  FlowSlm<float>& model = result.model;
  model.initialize(config.seed);
  AdamState adam(model.layout());
  std::int64_t start = 0;

  if (options.resume_from) {
    const Checkpoint ck = read_checkpoint(*options.resume_from);
    if (!(ck.config == model_config)) throw ConfigError("resume: checkpoint model config differs");
    if (!ck.meta.contains("train") || !ck.meta.contains("adam_t")) {
      throw ConfigError("resume: checkpoint has no optimizer state");
    }
    const TrainConfig prev = TrainConfig::from_json(ck.meta.at("train"));
    if (prev.seed != config.seed || prev.batch_utterances != config.batch_utterances ||
        prev.steps != config.steps) {
      throw ConfigError("resume: seed, batch size and step count must match the original run");
    }
    load_group(ck, "param", model.params());
    load_group(ck, "adam_m", adam.m);
    load_group(ck, "adam_v", adam.v);
    adam.t = ck.meta.at("adam_t").get<std::int64_t>();
    start = static_cast<std::int64_t>(ck.step);
    FLOWSLM_REQUIRE(start <= config.steps, "resume: checkpoint is past the configured step count");
  }

  std::ofstream metrics, timing;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    const auto mpath = *options.out_dir / "metrics.jsonl";
    const auto tpath = *options.out_dir / "timing.jsonl";
    if (start > 0) {
      truncate_log(mpath, start);
      truncate_log(tpath, start);
      metrics.open(mpath, std::ios::app);
      timing.open(tpath, std::ios::app);
    } else {
      metrics.open(mpath, std::ios::trunc);
      timing.open(tpath, std::ios::trunc);
    }
    if (!metrics || !timing) throw IoError("cannot open metric logs in " + options.out_dir->string());
  }
  auto write_ckpt = [&](const std::filesystem::path& path, std::int64_t step) {
    try {
      Checkpoint ck = make_train_checkpoint(model, adam, config, step);
      ck.meta.update(options.extra_meta);
      write_checkpoint(path, ck);
    } catch (const IoError& e) {
      throw IoError("training aborted at step " + std::to_string(step) + ": " + e.what());
    }
  };

  const auto t0 = std::chrono::steady_clock::now();
  ParamSet<float> grad = model.zero_grad();
  const int n = static_cast<int>(corpus.size());
  for (std::int64_t s = start; s < config.steps; ++s) {
    const int step = static_cast<int>(s);
    const std::vector<int> idx = batch_indices(config.seed, step, config.batch_utterances, n);
    std::vector<BatchItem> batch;
    batch.reserve(idx.size());
    for (std::size_t slot = 0; slot < idx.size(); ++slot) {
      batch.push_back({&corpus[idx[slot]], noise_seed(config.seed, step, static_cast<int>(slot))});
    }
    grad.set_zero();
    LossBreakdown loss;
    try {
      loss = model.loss_and_grad(batch, grad);
    } catch (const NumericalError& e) {
      throw NumericalError("training aborted at step " + std::to_string(step) + ": " + e.what());
    }
    const double norm = clip_grad_norm(grad, config.grad_clip_norm);
    if (!std::isfinite(norm)) {
      throw NumericalError("training aborted at step " + std::to_string(step) +
                           ": non-finite gradient norm");
    }
    const double lr = learning_rate(config, step);
    adamw_step(model.params(), grad, adam, lr, config);
    const std::int64_t done = s + 1;

    if (done == 1 || done % config.log_every == 0 || done == config.steps) {
      MetricRecord rec{static_cast<int>(done), loss.sem_loss, loss.cfm_loss, loss.total, lr, norm};
      result.log.push_back(rec);
      if (metrics.is_open()) {
        nlohmann::json line = rec.to_json();
        if (!options.config_hash.empty()) line["config_hash"] = options.config_hash;
        metrics << line.dump() << "\n";
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        timing << nlohmann::json{{"step", done}, {"wall_time_s", wall}}.dump() << "\n";
      }
      if (options.on_log) options.on_log(rec);
    }
    if (options.out_dir && config.checkpoint_every > 0 && done % config.checkpoint_every == 0) {
      std::filesystem::create_directories(*options.out_dir / "checkpoints");
      write_ckpt(*options.out_dir / "checkpoints" / step_name(done), done);
    }
  }
  result.steps_done = config.steps;
  if (options.out_dir) {
    metrics.flush();
    if (!metrics) throw IoError("failed writing metrics.jsonl");
    write_ckpt(*options.out_dir / "model.ckpt", config.steps);
  }
  return result;
}

void AblationGrid::validate() const {
  if (input_modes.empty() || k_values.empty() || cfm_enabled.empty()) {
    throw ConfigError("ablation grid: every axis needs at least one value");
  }
  for (int k : k_values) {
    if (k < 1) throw ConfigError("ablation grid: k values must be >= 1");
  }
  if (cells().empty()) throw ConfigError("ablation grid: no valid cells (CFM requires vector input)");
}

std::string AblationGrid::Cell::name() const {
  return to_string(input_mode) + "-k" + std::to_string(k) + (cfm ? "-cfm" : "");
}

std::vector<AblationGrid::Cell> AblationGrid::cells() const {
  std::vector<Cell> out;
  for (InputMode mode : input_modes) {
    for (bool cfm : cfm_enabled) {
      if (cfm && mode == InputMode::kToken) continue;
      for (int k : k_values) out.push_back({mode, k, cfm});
    }
  }
  return out;
}

EvalReport evaluate_cell(const FlowSlm<float>& model, const AblationInputs& inputs) {
  EvalReport r;
  if (inputs.heldout && !inputs.heldout->empty()) {
    std::int64_t tokens = 0;
    for (const auto& u : *inputs.heldout) tokens += u.length();
    r.set("heldout_ce", heldout_ce(model, *inputs.heldout), tokens);
  }
  if (inputs.lexical && !inputs.lexical->pairs.empty()) {
    r.set("lexical_acc", paired_accuracy(model, *inputs.lexical),
          static_cast<std::int64_t>(inputs.lexical->pairs.size()));
  }
  if (inputs.syntactic && !inputs.syntactic->pairs.empty()) {
    r.set("syntactic_acc", paired_accuracy(model, *inputs.syntactic),
          static_cast<std::int64_t>(inputs.syntactic->pairs.size()));
  }
  return r;
}

std::vector<AblationRow> run_ablation(const AblationGrid& grid, const ModelConfig& base_model,
                                      const TrainConfig& train_config, const AblationInputs& inputs,
                                      const std::function<void(const AblationRow&)>& on_row) {
  grid.validate();
  FLOWSLM_REQUIRE(inputs.train != nullptr && !inputs.train->empty(), "run_ablation: no training data");
  std::vector<AblationRow> rows;
  for (const auto& cell : grid.cells()) {
    AblationRow row;
    row.cell = cell;
    ModelConfig mc = base_model;
    mc.input_mode = cell.input_mode;
    mc.k_future = cell.k;
    mc.cfm_enabled = cell.cfm;
    row.config = {{"model", mc.to_json()}, {"train", train_config.to_json()}};
    try {
      const TrainResult tr = train(mc, train_config, *inputs.train);
      row.report = evaluate_cell(tr.model, inputs);
      row.report.seed = train_config.seed;
      row.report.config_hash =
          hash_json({{"model", mc.to_json()}, {"train", train_config.to_json()}});
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json ablation_table_json(const std::vector<AblationRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j = {{"cell", r.cell.name()},
                        {"input", to_string(r.cell.input_mode)},
                        {"k", r.cell.k},
                        {"objective", "sem-" + std::to_string(r.cell.k) +
                                          (r.cell.cfm ? " + cfm-" + std::to_string(r.cell.k) : "")},
                        {"ok", r.ok},
                        {"config", r.config}};
    if (r.ok) {
      j["report"] = r.report.to_json();
    } else {
      j["error"] = r.error;
    }
    out.push_back(std::move(j));
  }
  return {{"columns", {"input", "objective", "lexical_acc", "syntactic_acc", "heldout_ce"}},
          {"rows", out}};
}

}  // namespace flowslm
