#include "flowslm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace flowslm {

void GenerationConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("generation config: " + m); };
  if (!(top_p > 0.0 && top_p <= 1.0)) fail("top_p must be in (0,1]");
  if (!(silence_penalty >= 0.0)) fail("silence_penalty must be >= 0");
  if (!(cfg_scale >= 0.0)) fail("cfg_scale must be >= 0");
  if (!(prior_temperature > 0.0)) fail("prior_temperature must be > 0");
  if (max_frames < 1) fail("max_frames must be >= 1");
  try {
    solver.validate();
  } catch (const ContractViolation& e) {
    fail(e.what());
  }
}

nlohmann::json GenerationConfig::to_json() const {
  return {{"top_p", top_p},
          {"silence_penalty", silence_penalty},
          {"cfg_scale", cfg_scale},
          {"prior_temperature", prior_temperature},
          {"solver", to_string(solver.method)},
          {"nfe", solver.nfe},
          {"max_frames", max_frames},
          {"seed", seed}};
}

GenerationConfig GenerationConfig::from_json(const nlohmann::json& j) {
  GenerationConfig c;
  try {
    c.top_p = j.at("top_p").get<double>();
    c.silence_penalty = j.at("silence_penalty").get<double>();
    c.cfg_scale = j.at("cfg_scale").get<double>();
    c.prior_temperature = j.at("prior_temperature").get<double>();
    c.solver.method = solver_method_from_string(j.at("solver").get<std::string>());
    c.solver.nfe = j.at("nfe").get<int>();
    c.max_frames = j.at("max_frames").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generation config json: ") + e.what());
  }
  c.validate();
  return c;
}

std::string to_string(StopReason r) { return r == StopReason::kEos ? "eos" : "max_frames"; }

StopReason stop_reason_from_string(const std::string& s) {
  if (s == "eos") return StopReason::kEos;
  if (s == "max_frames") return StopReason::kMaxFrames;
  throw IoError("unknown stop reason '" + s + "'");
}

std::vector<double> nucleus_distribution(const std::vector<double>& logits, double top_p,
                                         double silence_penalty) {
  FLOWSLM_REQUIRE(!logits.empty(), "nucleus: empty logits");
  FLOWSLM_REQUIRE(top_p > 0.0 && top_p <= 1.0, "nucleus: top_p must be in (0,1]");
  std::vector<double> l = logits;
  for (double v : l) FLOWSLM_REQUIRE(std::isfinite(v), "nucleus: non-finite logit");
  if (static_cast<int>(l.size()) > kSilenceId) l[kSilenceId] -= silence_penalty;
  const double mx = *std::max_element(l.begin(), l.end());
  std::vector<double> p(l.size());
  double z = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) z += p[i] = std::exp(l[i] - mx);
  for (double& v : p) v /= z;

  std::vector<int> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p[a] > p[b]; });
  std::vector<double> out(p.size(), 0.0);
  double cum = 0.0;
  for (int id : order) {
    out[id] = p[id];
    cum += p[id];
    if (cum >= top_p) break;
  }
  for (double& v : out) v /= cum;
  return out;
}

int nucleus_sample(const std::vector<double>& logits, double top_p, double silence_penalty,
                   Rng& rng) {
  const std::vector<double> p = nucleus_distribution(logits, top_p, silence_penalty);
  const double u = rng.uniform();
  double cum = 0.0;
  int last = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    last = static_cast<int>(i);
    cum += p[i];
    if (u < cum) return last;
  }
  return last;  // rounding left u just above the total mass
}

VecD generate_frame(const FlowSlm<float>& model, const RowVec<float>& context,
                    const std::vector<int>& tokens, const GenerationConfig& config, Rng& rng,
                    SamplerCounters* counters) {
  FLOWSLM_REQUIRE(model.config().cfm_enabled, "generate_frame: model has no CFM head");
  const int e = model.config().embed_dim;
  const VecD x0 = sample_prior(e, config.prior_temperature, rng);
  const bool guided = config.cfg_scale > 0.0;
  const int rows = guided ? 2 : 1;
  const MatF ctx = context.replicate(rows, 1);
  const std::vector<std::vector<int>> toks(rows, tokens);
  const std::vector<char> drop = guided ? std::vector<char>{0, 1} : std::vector<char>{0};
  FieldFn<double> field = [&](double t, const VecD& x) -> VecD {
    const MatF xt = x.transpose().cast<float>().replicate(rows, 1);
    const MatF v = model.cfm_head_batch(xt, std::vector<float>(rows, static_cast<float>(t)), ctx,
                                        toks, drop);
    if (counters) counters->cfm_evaluations += rows;
    const VecD vc = v.row(0).transpose().cast<double>();
    if (!guided) return vc;
    return cfg_combine<double>(vc, v.row(1).transpose().cast<double>(), config.cfg_scale);
  };
  return ode_sample<double>(field, x0, config.solver);
}

Continuation continue_prompt(const FlowSlm<float>& model, const std::vector<int>& prompt_tokens,
                             const MatF& prompt_frames, const GenerationConfig& config, Rng& rng,
                             SamplerCounters* counters, const FrameRenderer& renderer) {
  config.validate();
  const ModelConfig& mc = model.config();
  const bool token_mode = mc.input_mode == InputMode::kToken;
  const int prompt_len = static_cast<int>(prompt_tokens.size());
  FLOWSLM_REQUIRE(prompt_len >= 1, "continue_prompt: prompt must have at least one frame");
  FLOWSLM_REQUIRE(prompt_frames.rows() == prompt_len, "continue_prompt: prompt tokens/frames mismatch");
  FLOWSLM_REQUIRE(mc.cfm_enabled || token_mode,
                  "continue_prompt: a vector-input model needs a CFM head to produce frames");
  FLOWSLM_REQUIRE(prompt_len + config.max_frames + 1 <= mc.max_positions,
                  "continue_prompt: prompt plus max_frames exceeds the model's max_positions");

  ContextState<float> state = model.encode_context(prompt_tokens, prompt_frames);
  Continuation out;
  out.prompt_tokens = prompt_tokens;
  out.prompt_len = prompt_len;
  out.embeddings = MatF::Zero(config.max_frames, mc.embed_dim);
  std::vector<double> row(mc.vocab_size);
  std::vector<int> heads(mc.k_future);
  for (int f = 0; f < config.max_frames; ++f) {
    const RowVec<float> c = state.last();
    const MatF logits = model.sem_logits(c);
    for (int i = 0; i < mc.k_future; ++i) {
      for (int v = 0; v < mc.vocab_size; ++v) row[v] = logits(i, v);
      heads[i] = nucleus_sample(row, config.top_p, config.silence_penalty, rng);
    }
    RowVec<float> frame = RowVec<float>::Zero(mc.embed_dim);
    if (mc.cfm_enabled) {
      try {
        frame = generate_frame(model, c, heads, config, rng, counters).transpose().cast<float>();
      } catch (const NumericalError& e) {
        throw NumericalError("continue_prompt: frame " + std::to_string(f) + ": " + e.what());
      }
    }
    out.tokens.push_back(heads[0]);
    out.embeddings.row(f) = frame;
    model.advance(state, heads[0], frame);
    if (counters) {
      ++counters->frames;
      ++counters->context_extensions;
    }
    if (heads[0] == kEosId) {
      out.stopped_by = StopReason::kEos;
      break;
    }
  }
  out.embeddings.conservativeResize(static_cast<Eigen::Index>(out.tokens.size()), Eigen::NoChange);
  if (!mc.cfm_enabled && renderer) {
    out.embeddings = renderer(out.tokens);
    FLOWSLM_REQUIRE(out.embeddings.rows() == static_cast<Eigen::Index>(out.tokens.size()),
                    "continue_prompt: renderer returned the wrong number of frames");
  }
  return out;
}

void write_continuations(const std::filesystem::path& dir, const ContinuationSet& set, int attr_dim) {
  std::filesystem::create_directories(dir);
  std::vector<Utterance> utts;
  nlohmann::json items = nlohmann::json::array();
  int embed_dim = 0;
  for (std::size_t i = 0; i < set.continuations.size(); ++i) {
    const Continuation& c = set.continuations[i];
    Utterance u;
    u.tokens = c.tokens;
    u.embeddings = c.embeddings;
    u.attribute = VecF::Zero(attr_dim);
    embed_dim = static_cast<int>(c.embeddings.cols());
    utts.push_back(std::move(u));
    items.push_back({{"prompt_id", i < set.prompt_ids.size() ? set.prompt_ids[i] : std::string()},
                     {"prompt_len", c.prompt_len},
                     {"prompt_tokens", c.prompt_tokens},
                     {"stopped_by", to_string(c.stopped_by)}});
  }
  write_shard(dir / "continuations.shard", utts, embed_dim, attr_dim);
  nlohmann::json side = {{"format", "flowslm-continuations"},
                         {"version", 1},
                         {"generation", set.config.to_json()},
                         {"meta", set.meta},
                         {"items", items}};
  std::ofstream os(dir / "continuations.json");
  os << side.dump(2) << "\n";
  if (!os) throw IoError("cannot write " + (dir / "continuations.json").string());
}

ContinuationSet read_continuations(const std::filesystem::path& dir) {
  std::ifstream is(dir / "continuations.json");
  if (!is) throw IoError("cannot read " + (dir / "continuations.json").string());
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt continuations sidecar: ") + e.what());
  }
  if (side.value("version", 0) != 1) throw IoError("unsupported continuations sidecar version");
  ContinuationSet set;
  set.config = GenerationConfig::from_json(side.at("generation"));
  set.meta = side.value("meta", nlohmann::json::object());
  const std::vector<Utterance> utts = read_shard(dir / "continuations.shard");
  const auto& items = side.at("items");
  if (items.size() != utts.size()) throw IoError("continuations sidecar/shard count mismatch");
  for (std::size_t i = 0; i < utts.size(); ++i) {
    Continuation c;
    c.tokens = utts[i].tokens;
    c.embeddings = utts[i].embeddings;
    c.prompt_len = items[i].at("prompt_len").get<int>();
    c.prompt_tokens = items[i].at("prompt_tokens").get<std::vector<int>>();
    c.stopped_by = stop_reason_from_string(items[i].at("stopped_by").get<std::string>());
    set.prompt_ids.push_back(items[i].at("prompt_id").get<std::string>());
    set.continuations.push_back(std::move(c));
  }
  return set;
}

}  // namespace flowslm
