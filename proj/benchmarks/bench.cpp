#include <benchmark/benchmark.h>

#include "flowslm/eval.hpp"
#include "flowslm/sampler.hpp"
#include "flowslm/trainer.hpp"

using namespace flowslm;

namespace {

struct Setup {
  GrammarSpec grammar = make_grammar({});
  RenderSpec render = make_render_spec({}, grammar.vocab_size);
  std::vector<Utterance> utts = generate_corpus(grammar, render, 16, 3);
};

const Setup& setup() {
  static const Setup s;
  return s;
}

ModelConfig config(int d) {
  ModelConfig c;
  c.d_model = d;
  c.n_layers = 4;
  c.n_heads = 4;
  c.cfm_hidden = 2 * d;
  return c;
}

FlowSlm<float> model(int d) {
  FlowSlm<float> m(config(d));
  m.initialize(1);
  return m;
}

}  // namespace

// One incremental context step after a 32-frame prefix.
void BM_ContextStep(benchmark::State& state) {
  const FlowSlm<float> m = model(static_cast<int>(state.range(0)));
  const Utterance& u = setup().utts[0];
  const int p = std::min(32, u.length() - 1);
  const std::vector<int> toks(u.tokens.begin(), u.tokens.begin() + p);
  const ContextState<float> base = m.encode_context(toks, u.embeddings.topRows(p));
  for (auto _ : state) {
    ContextState<float> s = base;
    benchmark::DoNotOptimize(m.advance(s, u.tokens[p], u.embeddings.row(p)));
  }
}
BENCHMARK(BM_ContextStep)->Arg(64)->Arg(128);

// Loss and gradient for a batch of utterances.
void BM_LossAndGrad(benchmark::State& state) {
  const FlowSlm<float> m = model(static_cast<int>(state.range(0)));
  std::vector<BatchItem> batch;
  for (std::size_t i = 0; i < 8; ++i) batch.push_back({&setup().utts[i], i});
  ParamSet<float> g = m.zero_grad();
  std::int64_t frames = 0;
  for (const auto& b : batch) frames += b.utterance->length();
  for (auto _ : state) {
    g.set_zero();
    benchmark::DoNotOptimize(m.loss_and_grad(batch, g));
  }
  state.SetItemsProcessed(state.iterations() * frames);
}
BENCHMARK(BM_LossAndGrad)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

// One generated frame: ODE integration with guidance.
void BM_GenerateFrame(benchmark::State& state) {
  const FlowSlm<float> m = model(128);
  const Utterance& u = setup().utts[1];
  const RowVec<float> ctx = m.context_matrix(u).row(4);
  GenerationConfig g;
  g.solver.nfe = static_cast<int>(state.range(0));
  Rng rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(generate_frame(m, ctx, {u.tokens[4], -1, -1, -1}, g, rng));
}
BENCHMARK(BM_GenerateFrame)->Arg(16)->Arg(64);

void BM_Nucleus(benchmark::State& state) {
  Rng rng(3);
  std::vector<double> logits(static_cast<std::size_t>(state.range(0)));
  for (auto& l : logits) l = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(nucleus_sample(logits, 0.95, 10.0, rng));
}
BENCHMARK(BM_Nucleus)->Arg(64)->Arg(1024);

void BM_Frechet(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  Rng rng(4);
  MatD a(2000, dim), b(2000, dim);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(frechet_distance(a, b));
}
BENCHMARK(BM_Frechet)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_GrammarScore(benchmark::State& state) {
  const GrammarScorer scorer(setup().grammar);
  const Utterance& u = setup().utts[2];
  for (auto _ : state) benchmark::DoNotOptimize(scorer.logprob(u.tokens));
  state.SetItemsProcessed(state.iterations() * u.length());
}
BENCHMARK(BM_GrammarScore);
BENCHMARK_MAIN();
