// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any failed.
//
// FLOWSLM_ACCEPT_ONLY=1,2,9   run a subset
// FLOWSLM_ACCEPT_STEPS=N      training steps for the ablation models (default 1000)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "flowslm/cfm_head.hpp"
#include "flowslm/eval.hpp"
#include "flowslm/flow.hpp"
#include "flowslm/sampler.hpp"
#include "flowslm/trainer.hpp"

using namespace flowslm;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int env_int(const char* name, int fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::atoi(v) : fallback;
}

// ---------------------------------------------------------------------------
// 1. Flow path identities.

Outcome flow_math() {
  const auto t0 = Clock::now();
  Rng rng(1);
  const double sigma = 1e-5;
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double t = rng.uniform();
    VecD x0(16), x1(16);
    for (auto& v : x0) v = rng.normal();
    for (auto& v : x1) v = rng.normal();
    const VecD xt = ot_flow<double>(t, x0, x1, sigma);
    const VecD u = ot_target_field<double>(x0, x1, sigma);
    const VecD path = t * x1 + (1.0 - (1.0 - sigma) * t) * x0;
    worst = std::max(worst, (xt - path).cwiseAbs().maxCoeff());
    worst = std::max(worst, (u - (x1 - (1.0 - sigma) * x0)).cwiseAbs().maxCoeff());
    // Moving along u for the remaining time lands on x1 + sigma x0.
    worst = std::max(worst, (xt + (1.0 - t) * u - (x1 + sigma * x0)).cwiseAbs().maxCoeff());
    // The path is linear in t, so a finite difference recovers u exactly up to rounding.
    const double h = t < 0.5 ? 0.5 : -0.5;
    const VecD fd = (ot_flow<double>(t + h, x0, x1, sigma) - xt) / h;
    worst = std::max(worst, (fd - u).cwiseAbs().maxCoeff());
    worst = std::max(worst, (ot_flow<double>(0.0, x0, x1, sigma) - x0).cwiseAbs().maxCoeff());
  }
  const double secs = since(t0);
  return {worst <= 1e-12 && secs < 1.0, fmt("max abs deviation %.2e over 200 triples, %.3f s", worst, secs)};
}

// ---------------------------------------------------------------------------
// 2. Solver order on dx/dt = x.

Outcome solver_order() {
  const auto t0 = Clock::now();
  const std::vector<int> nfes{8, 16, 32, 64, 128};
  bool nfe_exact = true;
  auto slope = [&](SolverMethod m) {
    std::vector<double> lx, ly;
    for (int nfe : nfes) {
      int calls = 0;
      FieldFn<double> f = [&](double, const VecD& x) {
        ++calls;
        return VecD(x);
      };
      const VecD x = ode_sample<double>(f, VecD::Ones(1), {m, nfe});
      nfe_exact &= calls == nfe;
      lx.push_back(std::log(static_cast<double>(nfe)));
      ly.push_back(std::log(std::abs(x[0] - std::exp(1.0))));
    }
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / lx.size();
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / ly.size();
    double num = 0, den = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      num += (lx[i] - mx) * (ly[i] - my);
      den += (lx[i] - mx) * (lx[i] - mx);
    }
    return -num / den;
  };
  const double e = slope(SolverMethod::kEuler), m = slope(SolverMethod::kMidpoint);
  const double secs = since(t0);
  const bool ok = std::abs(e - 1.0) <= 0.1 && std::abs(m - 2.0) <= 0.1 && nfe_exact && secs < 5.0;
  return {ok, fmt("euler slope %.3f, midpoint slope %.3f, nfe %s, %.3f s", e, m,
                  nfe_exact ? "exact" : "MISCOUNTED", secs)};
}

// ---------------------------------------------------------------------------
// 3. Finite-difference gradient check of the total loss in 64-bit.

Outcome gradient_check() {
  const auto t0 = Clock::now();
  ModelConfig c;
  c.input_mode = InputMode::kVector;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.k_future = 2;
  c.cfm_enabled = true;
  c.cfm_hidden = 16;
  c.cfm_blocks = 2;
  c.cond_dropout_p = 0.3;
  FlowSlm<double> m(c);
  m.initialize(3);
  Rng rng(17);
  for (auto& p : m.params().flat()) p += 0.1 * rng.normal();
  const GrammarSpec g = make_grammar({});
  const RenderSpec r = make_render_spec({}, g.vocab_size);
  const auto utts = generate_corpus(g, r, 3, 41);
  std::vector<BatchItem> batch;
  for (std::size_t i = 0; i < utts.size(); ++i) batch.push_back({&utts[i], 500 + i});
  ParamSet<double> grad = m.zero_grad();
  m.loss_and_grad(batch, grad);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const auto idx = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(grad.flat().size())));
    const double h = 1e-5, orig = m.params().flat()[idx];
    m.params().flat()[idx] = orig + h;
    const double lp = m.loss_forward(batch).total;
    m.params().flat()[idx] = orig - h;
    const double lm = m.loss_forward(batch).total;
    m.params().flat()[idx] = orig;
    const double fd = (lp - lm) / (2 * h), an = grad.flat()[idx];
    worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8}));
  }
  const double secs = since(t0);
  return {worst < 1e-4 && secs < 60.0, fmt("max relative error %.2e over 50 coordinates, %.1f s", worst, secs)};
}

// ---------------------------------------------------------------------------
// 4. A flow head without conditioning learns N(mu, 0.1^2 I).

Outcome unconditional_cfm() {
  const auto t0 = Clock::now();
  const VecD mu = (VecD(4) << 1.0, -1.0, 2.0, 0.0).finished();
  const int dim = 4, batch = 256, steps = 3000;
  const double sigma_min = 1e-5;
  auto layout = std::make_shared<ParamLayout>();
  CfmHeadShape shape;
  shape.embed_dim = dim;
  shape.cond_dim = 0;
  shape.hidden = 64;
  shape.blocks = 2;
  const CfmHead<float> head(*layout, shape, "cfm.");
  ParamSet<float> params(layout), grad(layout);
  Rng init(5);
  params.initialize(init, 0.02);
  AdamState adam(layout);
  TrainConfig tc;
  tc.steps = steps;
  tc.warmup_steps = 100;
  tc.lr_peak = 3e-3;
  Rng rng(6);
  MatF xt(batch, dim), target(batch, dim), out, dout, dinput;
  std::vector<float> ts(batch);
  const MatF none(batch, 0);
  CfmHead<float>::Cache cache;
  for (int s = 0; s < steps; ++s) {
    for (int i = 0; i < batch; ++i) {
      VecF x0(dim), x1(dim);
      ts[i] = static_cast<float>(rng.uniform());
      for (int d = 0; d < dim; ++d) x0[d] = static_cast<float>(rng.normal());
      for (int d = 0; d < dim; ++d) x1[d] = static_cast<float>(mu[d] + 0.1 * rng.normal());
      xt.row(i) = ot_flow<float>(ts[i], x0, x1, static_cast<float>(sigma_min)).transpose();
      target.row(i) = ot_target_field<float>(x0, x1, static_cast<float>(sigma_min)).transpose();
    }
    head.forward(params, head.assemble(xt, ts, none), out, &cache);
    dout = (2.0f / batch) * (out - target);
    grad.set_zero();
    head.backward(params, cache, dout, grad, dinput);
    clip_grad_norm(grad, tc.grad_clip_norm);
    adamw_step(params, grad, adam, learning_rate(tc, s), tc);
  }
  const double train_secs = since(t0);

  const int n = 1000;
  MatD gen(n, dim), oracle(n, dim);
  Rng srng(7);
  FieldFn<double> field = [&](double t, const VecD& x) -> VecD {
    MatF o;
    head.forward(params, head.assemble(x.transpose().cast<float>(), {static_cast<float>(t)}, MatF(1, 0)), o,
                 nullptr);
    return o.row(0).transpose().cast<double>();
  };
  for (int i = 0; i < n; ++i) {
    gen.row(i) = ode_sample<double>(field, sample_prior(dim, 1.0, srng), {SolverMethod::kMidpoint, 64}).transpose();
    for (int d = 0; d < dim; ++d) oracle(i, d) = mu[d] + 0.1 * srng.normal();
  }
  const VecD mean = gen.colwise().mean().transpose();
  const double mean_err = (mean - mu).cwiseAbs().maxCoeff();
  const double fd = frechet_distance(gen, oracle);
  const double secs = since(t0);
  return {mean_err <= 0.05 && fd < 0.05 && secs < 300.0,
          fmt("max |mean - mu| %.4f, FD to oracle %.4f, train %.1f s, total %.1f s", mean_err, fd, train_secs,
              secs)};
}

// ---------------------------------------------------------------------------
// Shared ablation-scale models for 5-8.

struct SeedData {
  GrammarSpec grammar;
  RenderSpec render;
  std::vector<Utterance> train, heldout;
  MinimalPairSet lexical, syntactic;
};

const GrammarSpec& grammar() {
  static const GrammarSpec g = make_grammar({});
  return g;
}
const RenderSpec& render() {
  static const RenderSpec r = make_render_spec({}, grammar().vocab_size);
  return r;
}

const SeedData& seed_data(int seed) {
  static std::map<int, SeedData> cache;
  auto it = cache.find(seed);
  if (it != cache.end()) return it->second;
  SeedData d;
  d.grammar = grammar();
  d.render = render();
  const auto s = static_cast<std::uint64_t>(seed);
  d.train = generate_corpus(d.grammar, d.render, 2000, 100 + s);
  d.heldout = generate_corpus(d.grammar, d.render, 200, 900 + s);
  d.lexical = make_minimal_pairs(d.grammar, d.render, PairKind::kLexical, 200, 50 + s);
  d.syntactic = make_minimal_pairs(d.grammar, d.render, PairKind::kSyntactic, 200, 60 + s);
  return cache.emplace(seed, std::move(d)).first->second;
}

struct Cell {
  InputMode mode;
  int k;
  bool cfm;
  std::string name() const { return AblationGrid::Cell{mode, k, cfm}.name(); }
};

struct Trained {
  FlowSlm<float> model;
  EvalReport report;
  double seconds = 0.0;
};

int train_steps() { return env_int("FLOWSLM_ACCEPT_STEPS", 1000); }

const Trained& trained(const Cell& cell, int seed) {
  static std::map<std::string, Trained> cache;
  const std::string key = cell.name() + "/" + std::to_string(seed);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const SeedData& d = seed_data(seed);
  ModelConfig mc;
  mc.input_mode = cell.mode;
  mc.k_future = cell.k;
  mc.cfm_enabled = cell.cfm;
  mc.d_model = 48;
  mc.n_layers = 2;
  mc.n_heads = 4;
  mc.cfm_hidden = 64;
  mc.cfm_blocks = 2;
  TrainConfig tc;
  tc.steps = train_steps();
  tc.batch_utterances = 16;
  tc.lr_peak = 2e-3;
  tc.warmup_steps = tc.steps / 20;
  tc.seed = static_cast<std::uint64_t>(seed);
  const auto t0 = Clock::now();
  TrainResult tr = train(mc, tc, d.train);
  AblationInputs in{&d.train, &d.heldout, &d.lexical, &d.syntactic};
  EvalReport rep = evaluate_cell(tr.model, in);
  const double secs = since(t0);
  std::printf("  trained %-14s seed %d: ce %.4f lexical %.3f syntactic %.3f (%.0f s)\n", cell.name().c_str(), seed,
              rep.metrics.at("heldout_ce"), rep.metrics.at("lexical_acc"), rep.metrics.at("syntactic_acc"), secs);
  std::fflush(stdout);
  return cache.emplace(key, Trained{std::move(tr.model), std::move(rep), secs}).first->second;
}

const Cell kTok1{InputMode::kToken, 1, false};
const Cell kVec1{InputMode::kVector, 1, false};
const Cell kVec4{InputMode::kVector, 4, false};
const Cell kVec1Cfm{InputMode::kVector, 1, true};
const Cell kVec4Cfm{InputMode::kVector, 4, true};
const std::vector<int> kSeeds{0, 1, 2};

double mean_metric(const Cell& c, const char* metric) {
  double s = 0;
  for (int seed : kSeeds) s += trained(c, seed).report.metrics.at(metric);
  return s / kSeeds.size();
}

double total_train_seconds(const std::vector<Cell>& cells) {
  double s = 0;
  for (const auto& c : cells) {
    for (int seed : kSeeds) s += trained(c, seed).seconds;
  }
  return s;
}

// ---------------------------------------------------------------------------
// 5. Lower CE but worse paired accuracy for vector input.

Outcome table_direction() {
  const double ce_tok = mean_metric(kTok1, "heldout_ce"), ce_vec = mean_metric(kVec1, "heldout_ce");
  const double lex_tok = mean_metric(kTok1, "lexical_acc"), lex_v1 = mean_metric(kVec1, "lexical_acc"),
               lex_v4 = mean_metric(kVec4, "lexical_acc");
  const double syn_v1 = mean_metric(kVec1, "syntactic_acc"), syn_v4 = mean_metric(kVec4, "syntactic_acc");
  const double secs = total_train_seconds({kTok1, kVec1, kVec4});
  const bool a = ce_vec < ce_tok;
  const bool b = lex_v1 <= lex_v4 - 0.05;
  const bool c = lex_tok > lex_v1;
  return {a && b && c && secs <= 5400.0,
          fmt("(a) CE vector-k1 %.4f < token-k1 %.4f: %s; (b) lexical vector-k1 %.3f vs vector-k4 %.3f, "
              "gap %.1f pts (need >= 5): %s; (c) lexical token-k1 %.3f > vector-k1 %.3f: %s; "
              "syntactic vector-k1 %.3f vs vector-k4 %.3f (info); 9 runs %.0f s",
              ce_vec, ce_tok, a ? "ok" : "no", lex_v1, lex_v4, 100 * (lex_v4 - lex_v1), b ? "ok" : "no", lex_tok,
              lex_v1, c ? "ok" : "no", syn_v1, syn_v4, secs)};
}

// ---------------------------------------------------------------------------
// 6. The flow head costs little at k=4 and k=4 recovers the k=1 drop.

Outcome cfm_interference() {
  const double k1 = mean_metric(kVec1, "lexical_acc"), k4 = mean_metric(kVec4, "lexical_acc");
  const double k1c = mean_metric(kVec1Cfm, "lexical_acc"), k4c = mean_metric(kVec4Cfm, "lexical_acc");
  const double s_k1 = mean_metric(kVec1, "syntactic_acc"), s_k4 = mean_metric(kVec4, "syntactic_acc");
  const double s_k1c = mean_metric(kVec1Cfm, "syntactic_acc"), s_k4c = mean_metric(kVec4Cfm, "syntactic_acc");
  const bool within = std::abs(k4c - k4) <= 0.03;
  const double drop = k1 - k1c, recovery = k4c - k1c;
  const bool recovers = drop > 0 ? recovery >= 0.5 * drop : recovery >= 0.0;
  return {within && recovers,
          fmt("lexical: k4+cfm %.3f vs k4 %.3f (|diff| %.1f pts, need <= 3): %s; k1 drop with cfm %.1f pts, "
              "k4+cfm recovers %.1f pts (need >= %.1f): %s; syntactic k1 %.3f k1+cfm %.3f k4 %.3f k4+cfm %.3f (info)",
              k4c, k4, 100 * std::abs(k4c - k4), within ? "ok" : "no", 100 * drop, 100 * recovery,
              std::max(0.0, 50 * drop), recovers ? "ok" : "no", s_k1, s_k1c, s_k4, s_k4c)};
}

// ---------------------------------------------------------------------------
// 7, 8. Generation from the seed-0 models.

constexpr int kPromptFrames = 12;

std::vector<const Utterance*> prompts(int n) {
  std::vector<const Utterance*> out;
  for (const auto& u : seed_data(0).heldout) {
    if (u.length() > kPromptFrames + 4 && static_cast<int>(out.size()) < n) out.push_back(&u);
  }
  return out;
}

GenerationConfig gen_config() {
  GenerationConfig g;
  g.max_frames = 40;
  return g;
}

Continuation continue_utt(const FlowSlm<float>& m, const Utterance& u, const GenerationConfig& g,
                          std::uint64_t seed, const FrameRenderer& renderer = nullptr) {
  Rng rng(seed);
  const std::vector<int> toks(u.tokens.begin(), u.tokens.begin() + kPromptFrames);
  return continue_prompt(m, toks, u.embeddings.topRows(kPromptFrames), g, rng, nullptr, renderer);
}

Outcome speaker_preservation() {
  const Trained& flow = trained(kVec4Cfm, 0);
  const Trained& tok = trained(kTok1, 0);
  const auto t0 = Clock::now();
  const auto ps = prompts(60);
  const GenerationConfig g = gen_config();
  double flow_sum = 0, tok_sum = 0;
  int flow_n = 0, tok_n = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const MatF prompt = ps[i]->embeddings.topRows(kPromptFrames);
    const Continuation a = continue_utt(flow.model, *ps[i], g, 7000 + i);
    if (a.embeddings.rows() >= 4) {
      flow_sum += speaker_similarity(prompt, a.embeddings, render());
      ++flow_n;
    }
    Rng render_rng = Rng::derive(8000 + i, "render");
    FrameRenderer blind = [&](const std::vector<int>& toks) {
      return render_with_attribute(toks, render(), VecD::Zero(render().attr_dim), render_rng).embeddings;
    };
    const Continuation b = continue_utt(tok.model, *ps[i], g, 7000 + i, blind);
    if (b.embeddings.rows() >= 4) {
      tok_sum += speaker_similarity(prompt, b.embeddings, render());
      ++tok_n;
    }
  }
  const double gen_secs = since(t0);
  const double secs = gen_secs + flow.seconds + tok.seconds;
  const double fs_ = flow_n ? flow_sum / flow_n : 0.0, ts_ = tok_n ? tok_sum / tok_n : 1.0;
  return {fs_ >= 0.8 && ts_ <= 0.2 && secs < 900.0,
          fmt("Flow-SLM %.3f over %d continuations (need >= 0.8), token-only blind re-render %.3f over %d "
              "(need <= 0.2), %.0f s incl. training",
              fs_, flow_n, ts_, tok_n, secs)};
}

Outcome silence_penalty() {
  const Trained& flow = trained(kVec4Cfm, 0);
  const auto ps = prompts(100);
  auto fraction = [&](double penalty) {
    GenerationConfig g = gen_config();
    g.silence_penalty = penalty;
    std::int64_t sil = 0, total = 0;
    for (int i = 0; i < 100; ++i) {
      const Continuation c = continue_utt(flow.model, *ps[i % ps.size()], g, 9000 + i);
      for (int t : c.tokens) sil += t == kSilenceId;
      total += static_cast<std::int64_t>(c.tokens.size());
    }
    return static_cast<double>(sil) / static_cast<double>(total);
  };
  const double f0 = fraction(0.0), f10 = fraction(10.0);
  return {f10 < f0, fmt("silence fraction %.4f at penalty 0, %.4f at penalty 10, 100 continuations", f0, f10)};
}

// ---------------------------------------------------------------------------
// 9. Frechet distance examples.

Outcome frechet_examples() {
  const auto t0 = Clock::now();
  Rng rng(21);
  const int n = 100000;
  MatD a(n, 4), b(n, 4);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = rng.normal();
  b.col(0).array() += 1.0;
  const double same = frechet_distance(a, a);
  const double shift = frechet_distance(a, b);
  MatD c(n, 1), d(n, 1);
  for (int i = 0; i < n; ++i) {
    c(i, 0) = rng.normal();
    d(i, 0) = 2.0 * rng.normal();
  }
  const double var = frechet_distance(c, d);
  const double secs = since(t0);
  const bool ok = std::abs(same) <= 1e-8 && std::abs(shift - 1.0) <= 0.05 && std::abs(var - 1.0) <= 0.05 && secs < 60;
  return {ok, fmt("identical %.2e, mean shift %.4f, variance mismatch %.4f, %.2f s", same, shift, var, secs)};
}

// ---------------------------------------------------------------------------
// 10. Nucleus sampling fidelity.

Outcome nucleus_fidelity() {
  Rng rng(31);
  std::vector<double> logits(64);
  for (auto& l : logits) l = 1.5 * rng.normal();
  std::string detail;
  bool ok = true;
  for (double top_p : {0.5, 0.95, 1.0}) {
    const auto p = nucleus_distribution(logits, top_p, 0.0);
    std::vector<double> freq(p.size(), 0.0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) freq[nucleus_sample(logits, top_p, 0.0, rng)] += 1.0 / n;
    double tv = 0;
    for (std::size_t v = 0; v < p.size(); ++v) tv += std::abs(freq[v] - p[v]);
    tv *= 0.5;
    ok &= tv <= 0.02;
    detail += fmt("%sTV %.4f at top_p %.2f", detail.empty() ? "" : ", ", tv, top_p);
  }
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// 11. Command determinism.

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream is(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    out[fs::relative(e.path(), root).string()] = ss.str();
  }
  return out;
}

Outcome determinism() {
  const std::vector<std::string> overrides = {
      "data.n_train=80",          "data.n_heldout=40",          "data.n_lexical_pairs=20",
      "data.n_syntactic_pairs=20", "data.n_consistency_pairs=10", "train.steps=12",
      "train.warmup_steps=2",     "train.batch_utterances=8",   "train.checkpoint_every=6",
      "model.d_model=16",         "model.n_layers=1",           "model.n_heads=2",
      "model.cfm_hidden=16",      "model.cfm_blocks=1",         "eval.n_prompts=10",
      "eval.continuations_per_prompt=2", "eval.n_consistency_pairs=10", "generation.max_frames=16",
      "generation.nfe=8"};
  cli::CommandContext ctx;
  ctx.config = cli::RunConfig::load(nullptr, overrides);
  ctx.out = fs::temp_directory_path() / "flowslm_acceptance_determinism";
  fs::remove_all(ctx.out);
  cli::cmd_make_data(ctx);
  auto run = [&] {
    for (const char* stage : {"train", "generate", "eval"}) fs::remove_all(ctx.out / stage);
    cli::cmd_train(ctx);
    cli::cmd_generate(ctx);
    cli::cmd_eval(ctx);
    auto snap = snapshot(ctx.out);
    snap.erase("train/timing.jsonl");  // wall-clock by design
    return snap;
  };
  const auto first = run();
  const auto second = run();
  std::set<std::string> differ;
  for (const auto& [k, v] : first) {
    auto it = second.find(k);
    if (it == second.end() || it->second != v) differ.insert(k);
  }
  for (const auto& [k, v] : second) {
    if (!first.count(k)) differ.insert(k);
  }
  std::string names;
  for (const auto& d : differ) names += " " + d;
  int compared = 0;
  for (const auto& [k, v] : first) compared += k.rfind("data/", 0) != 0;
  return {differ.empty() && compared >= 6,
          differ.empty() ? fmt("%d train/generate/eval artifacts byte-identical across reruns", compared)
                         : "differing artifacts:" + names};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
      {1, "flow-math exactness", flow_math},
      {2, "solver order", solver_order},
      {3, "gradient correctness", gradient_check},
      {4, "unconditional CFM sanity", unconditional_cfm},
      {9, "FSD correctness", frechet_examples},
      {10, "nucleus-sampling fidelity", nucleus_fidelity},
      {11, "determinism", determinism},
      {7, "speaker preservation", speaker_preservation},
      {8, "silence-penalty effect", silence_penalty},
      {5, "ablation direction (CE vs paired accuracy)", table_direction},
      {6, "CFM-head interference", cfm_interference},
  };
  std::set<int> only;
  if (const char* v = std::getenv("FLOWSLM_ACCEPT_ONLY")) {
    std::stringstream ss(v);
    for (std::string tok; std::getline(ss, tok, ',');) {
      if (!tok.empty()) only.insert(std::atoi(tok.c_str()));
    }
  }
  std::map<int, std::pair<bool, std::string>> results;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    results[c.id] = {o.pass, c.name};
  }
  int failed = 0;
  std::printf("\nsummary (ablation models: %d steps)\n", train_steps());
  for (const auto& [id, r] : results) {
    std::printf("  %s %2d %s\n", r.first ? "PASS" : "FAIL", id, r.second.c_str());
    failed += !r.first;
  }
  std::printf("%zu criteria run, %d failed\n", results.size(), failed);
  return failed == 0 ? 0 : 1;
}
