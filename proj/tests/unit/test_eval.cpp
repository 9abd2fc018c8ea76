#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "flowslm/eval.hpp"

using namespace flowslm;

namespace {

ModelConfig tiny(InputMode mode, int k, bool cfm) {
  ModelConfig c;
  c.input_mode = mode;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.k_future = k;
  c.cfm_enabled = cfm;
  c.cfm_hidden = 16;
  c.cfm_blocks = 1;
  return c;
}

FlowSlm<float> jittered(const ModelConfig& c, std::uint64_t seed) {
  FlowSlm<float> m(c);
  m.initialize(seed);
  Rng rng(seed + 1);
  for (Eigen::Index i = 0; i < m.params().flat().size(); ++i) {
    m.params().flat()[i] += static_cast<float>(0.05 * rng.normal());
  }
  return m;
}

struct Data {
  GrammarSpec grammar = make_grammar({});
  RenderSpec render = make_render_spec({}, grammar.vocab_size);
  GrammarScorer scorer{grammar};
  std::vector<Utterance> heldout = generate_corpus(grammar, render, 200, 21);
  MinimalPairSet lexical = make_minimal_pairs(grammar, render, PairKind::kLexical, 200, 22);
  MinimalPairSet syntactic = make_minimal_pairs(grammar, render, PairKind::kSyntactic, 200, 23);
};

const Data& data() {
  static const Data d;
  return d;
}

// Held-out utterances split in half: prefix as prompt, suffix as continuation.
std::vector<Continuation> suffixes(const std::vector<Utterance>& us) {
  std::vector<Continuation> out;
  for (const auto& u : us) {
    const int p = u.length() / 2;
    Continuation c;
    c.prompt_tokens.assign(u.tokens.begin(), u.tokens.begin() + p);
    c.tokens.assign(u.tokens.begin() + p, u.tokens.end());
    c.prompt_len = p;
    c.embeddings = u.embeddings.bottomRows(u.length() - p);
    c.stopped_by = StopReason::kEos;
    out.push_back(std::move(c));
  }
  return out;
}

MatD column(std::initializer_list<double> v) {
  MatD m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

}  // namespace

TEST_CASE("a model with constant logits scores -M log V") {
  FlowSlm<float> m(tiny(InputMode::kVector, 2, false));
  m.initialize(0);
  m.params().tensor(m.sem_weight_id()).setZero();
  m.params().row(m.sem_bias_id()).setZero();
  for (const auto& u : std::vector<Utterance>(data().heldout.begin(), data().heldout.begin() + 5)) {
    CHECK(sequence_logprob(m, u) == doctest::Approx(-u.length() * std::log(64.0)).epsilon(1e-6));
  }
  CHECK(heldout_ce(m, data().heldout) == doctest::Approx(std::log(64.0)).epsilon(1e-6));
  CHECK_THROWS_AS(heldout_ce(m, {}), ContractViolation);
}

TEST_CASE("paired accuracy with oracle and chance scorers") {
  const Data& d = data();
  auto oracle = [&](const Utterance& u) { return d.scorer.logprob(u.tokens); };
  CHECK(paired_accuracy(d.lexical, oracle) == 1.0);
  CHECK(paired_accuracy(d.syntactic, oracle) == 1.0);
  Rng rng(3);
  auto coin = [&](const Utterance&) { return rng.uniform(); };
  const double acc = paired_accuracy(d.lexical, coin);
  CHECK(acc > 0.4);
  CHECK(acc < 0.6);
  auto flat = [](const Utterance&) { return 1.0; };
  CHECK(paired_accuracy(d.lexical, flat) == 0.5);
  CHECK_THROWS_AS(paired_accuracy(MinimalPairSet{}, flat), ContractViolation);
}

TEST_CASE("an untrained model is near chance on syntactic pairs") {
  FlowSlm<float> m(tiny(InputMode::kVector, 1, false));
  m.initialize(4);
  const double acc = paired_accuracy(m, data().syntactic);
  CHECK(acc >= 0.4);
  CHECK(acc <= 0.6);
}

TEST_CASE("paired accuracy is invariant to pair order and flips under label swap") {
  const FlowSlm<float> m = jittered(tiny(InputMode::kVector, 1, false), 6);
  MinimalPairSet p = data().lexical;
  p.pairs.resize(60);
  const double acc = paired_accuracy(m, p);
  MinimalPairSet rev = p;
  std::reverse(rev.pairs.begin(), rev.pairs.end());
  CHECK(paired_accuracy(m, rev) == acc);
  MinimalPairSet swapped = p;
  for (auto& pr : swapped.pairs) std::swap(pr.positive, pr.negative);
  CHECK(paired_accuracy(m, swapped) == doctest::Approx(1.0 - acc));
}

TEST_CASE("paired scoring uses head 0 only") {
  FlowSlm<float> m = jittered(tiny(InputMode::kVector, 3, false), 7);
  const Utterance& u = data().heldout[0];
  const double before = sequence_logprob(m, u);
  const int V = m.config().vocab_size;
  auto w = m.params().tensor(m.sem_weight_id());
  auto b = m.params().row(m.sem_bias_id());
  Rng rng(1);
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = V; c < w.cols(); ++c) w(r, c) = static_cast<float>(rng.normal());
  }
  for (Eigen::Index c = V; c < b.cols(); ++c) b(c) = 5.0f;
  CHECK(sequence_logprob(m, u) == before);
  w(0, 0) += 1.0f;
  CHECK(sequence_logprob(m, u) != before);
}

TEST_CASE("gen_ppl on ground truth and random tokens") {
  const Data& d = data();
  const auto truth = suffixes(d.heldout);
  const double ref = corpus_ppl(d.heldout, d.scorer);
  const double got = gen_ppl(truth, d.scorer);
  CHECK(std::abs(got - ref) / ref <= 0.10);

  auto random = truth;
  Rng rng(8);
  for (auto& c : random) {
    for (auto& t : c.tokens) t = 2 + static_cast<int>(rng.below(62));
  }
  CHECK(gen_ppl(random, d.scorer) >= 5.0 * ref);

  auto reversed = truth;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(gen_ppl(reversed, d.scorer) == doctest::Approx(got).epsilon(1e-12));

  CHECK_THROWS_AS(gen_ppl({}, d.scorer), ContractViolation);
  std::vector<Continuation> empty(2);
  CHECK_THROWS_AS(gen_ppl(empty, d.scorer), ContractViolation);
  CHECK_THROWS_AS(corpus_ppl({}, d.scorer), ContractViolation);
}

TEST_CASE("speaker similarity") {
  const Data& d = data();
  const RenderSpec& r = d.render;
  const GrammarSpec& g = d.grammar;
  Rng rng(5);
  const auto tokens_a = sample_derivation(g, rng).tokens;
  const auto tokens_b = sample_derivation(g, rng).tokens;
  const Utterance a = render_utterance(tokens_a, r, 2, rng);
  const Utterance b = render_utterance(tokens_b, r, 2, rng);
  const Utterance c = render_utterance(tokens_b, r, 5, rng);
  const double same = speaker_similarity(a.embeddings, b.embeddings, r);
  const double diff = speaker_similarity(a.embeddings, c.embeddings, r);
  CHECK(same >= 0.99);
  CHECK(diff < same);
  CHECK(speaker_similarity(a.embeddings, a.embeddings, r) == doctest::Approx(1.0));
  CHECK(speaker_similarity(a.embeddings, b.embeddings, r) ==
        doctest::Approx(speaker_similarity(b.embeddings, a.embeddings, r)));
  CHECK_THROWS_AS(speaker_similarity(a.embeddings.topRows(3), b.embeddings, r), ContractViolation);
  // Attribute-free frames carry no speaker direction.
  const Utterance blank = render_with_attribute(tokens_a, r, VecD::Zero(r.attr_dim), rng);
  CHECK(std::abs(speaker_similarity(blank.embeddings, b.embeddings, r)) < 0.5);
}

TEST_CASE("frechet distance worked examples") {
  // Sample variances 2 and 8, means 0 and 4: 16 + 2 + 8 - 2*4.
  CHECK(frechet_distance(column({-1, 1}), column({2, 6})) == doctest::Approx(18.0).epsilon(1e-5));
  CHECK(frechet_distance(column({2, 6}), column({-1, 1})) == doctest::Approx(18.0).epsilon(1e-5));
  MatD x(4, 2);
  x << 1, 0, -1, 0, 0, 2, 0, -2;
  CHECK(frechet_distance(x, x) == doctest::Approx(0.0).epsilon(1e-9));
  MatD shifted = x.rowwise() + RowVec<double>::Constant(2, 3.0);
  CHECK(frechet_distance(x, shifted) == doctest::Approx(18.0).epsilon(1e-6));
  CHECK_THROWS_AS(frechet_distance(x, column({1, 2, 3})), ContractViolation);
  CHECK_THROWS_AS(frechet_distance(x.topRows(2), x), ContractViolation);
}

TEST_CASE("frechet distance is symmetric, non-negative and shift-invariant") {
  Rng rng(12);
  MatD a(40, 3), b(50, 3);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = 2.0 * rng.normal() + 1.0;
  const double ab = frechet_distance(a, b);
  CHECK(ab > 0.0);
  CHECK(frechet_distance(b, a) == doctest::Approx(ab).epsilon(1e-8));
  const RowVec<double> s = RowVec<double>::Constant(3, -7.0);
  const MatD as = a.rowwise() + s, bs = b.rowwise() + s;
  CHECK(frechet_distance(as, bs) == doctest::Approx(ab).epsilon(1e-8));
}

TEST_CASE("acoustic consistency score") {
  const Data& d = data();
  const FlowSlm<float> m = jittered(tiny(InputMode::kVector, 2, true), 9);
  Rng rng(31);
  double total = 0.0;
  const int n = 60;
  for (int i = 0; i < n; ++i) {
    const MinimalPair p = make_consistency_pair(d.grammar, d.render, rng);
    const double s = acoustic_consistency_score(m, p, 100 + i);
    CHECK((s == 0.0 || s == 0.5 || s == 1.0));
    total += s;
    if (i == 0) {
      CHECK(acoustic_consistency_score(m, {p.positive, p.positive}, 1) == 0.5);
      MinimalPair swapped{p.negative, p.positive};
      CHECK(acoustic_consistency_score(m, swapped, 100) == 1.0 - s);
      CHECK(mean_flow_loss(m, p.positive, 4) == mean_flow_loss(m, p.positive, 4));
    }
  }
  CHECK(total / n >= 0.3);
  CHECK(total / n <= 0.7);
  MinimalPair mismatch{d.heldout[0], d.heldout[1]};
  CHECK_THROWS_AS(acoustic_consistency_score(m, mismatch, 0), ContractViolation);
  FlowSlm<float> plain(tiny(InputMode::kVector, 1, false));
  plain.initialize(0);
  CHECK_THROWS_AS(mean_flow_loss(plain, d.heldout[0], 0), ContractViolation);
}

TEST_CASE("report json and hashes") {
  EvalReport r;
  r.set("heldout_ce", 1.25, 400);
  r.set("lexical_acc", 0.75, 200);
  r.config_hash = hash_json({{"a", 1}});
  r.seed = 7;
  const EvalReport back = EvalReport::from_json(r.to_json());
  CHECK(back.metrics == r.metrics);
  CHECK(back.counts == r.counts);
  CHECK(back.config_hash == r.config_hash);
  CHECK(back.seed == 7);
  CHECK(r.config_hash.size() == 16);
  CHECK(hash_json({{"a", 1}}) == r.config_hash);
  CHECK(hash_json({{"a", 2}}) != r.config_hash);
  FlowSlm<float> m(tiny(InputMode::kVector, 1, false));
  m.initialize(0);
  const std::string h = hash_params(m.params());
  m.params().flat()[0] += 1.0f;
  CHECK(hash_params(m.params()) != h);
}
