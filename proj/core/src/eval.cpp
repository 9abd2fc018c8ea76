#include "flowslm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/Eigenvalues>

#include "flowslm/flow.hpp"
#include "flowslm/rng.hpp"

namespace flowslm {

nlohmann::json EvalReport::to_json() const {
  nlohmann::json m = nlohmann::json::object(), c = nlohmann::json::object();
  for (const auto& [k, v] : metrics) m[k] = v;
  for (const auto& [k, v] : counts) c[k] = v;
  return {{"metrics", m}, {"counts", c}, {"config_hash", config_hash}, {"seed", seed}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  for (const auto& [k, v] : j.at("metrics").items()) r.metrics[k] = v.get<double>();
  for (const auto& [k, v] : j.at("counts").items()) r.counts[k] = v.get<std::int64_t>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

std::string hash_json(const nlohmann::json& j) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

std::string hash_params(const ParamSet<float>& p) {
  const auto& f = p.flat();
  const std::string_view bytes(reinterpret_cast<const char*>(f.data()),
                               static_cast<std::size_t>(f.size()) * sizeof(float));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

double sequence_logprob(const FlowSlm<float>& model, const Utterance& utt) {
  double s = 0.0;
  for (double v : model.head0_logprobs(utt)) s += v;
  return s;
}

double heldout_ce(const FlowSlm<float>& model, const std::vector<Utterance>& utts) {
  FLOWSLM_REQUIRE(!utts.empty(), "heldout_ce: no utterances");
  double nll = 0.0;
  std::int64_t n = 0;
  for (const auto& u : utts) {
    nll -= sequence_logprob(model, u);
    n += u.length();
  }
  return nll / static_cast<double>(n);
}

double paired_accuracy(const MinimalPairSet& pairs, const SequenceScorer& score) {
  FLOWSLM_REQUIRE(!pairs.pairs.empty(), "paired_accuracy: empty pair set");
  double correct = 0.0;
  for (const auto& p : pairs.pairs) {
    const double a = score(p.positive);
    const double b = score(p.negative);
    if (a > b) {
      correct += 1.0;
    } else if (a == b) {
      correct += 0.5;
    }
  }
  return correct / static_cast<double>(pairs.pairs.size());
}

double paired_accuracy(const FlowSlm<float>& model, const MinimalPairSet& pairs) {
  return paired_accuracy(pairs, [&](const Utterance& u) { return sequence_logprob(model, u); });
}

double gen_ppl(const std::vector<Continuation>& continuations, const GrammarScorer& scorer) {
  FLOWSLM_REQUIRE(!continuations.empty(), "gen_ppl: no continuations");
  double lp = 0.0;
  std::int64_t n = 0;
  for (const auto& c : continuations) {
    if (c.tokens.empty()) continue;
    const bool complete = c.tokens.back() == kEosId;
    lp += scorer.conditional_logprob(c.prompt_tokens, c.tokens, complete);
    n += static_cast<std::int64_t>(c.tokens.size());
  }
  FLOWSLM_REQUIRE(n > 0, "gen_ppl: continuations contain no tokens");
  return std::exp(-lp / static_cast<double>(n));
}

double corpus_ppl(const std::vector<Utterance>& utts, const GrammarScorer& scorer) {
  FLOWSLM_REQUIRE(!utts.empty(), "corpus_ppl: no utterances");
  double lp = 0.0;
  std::int64_t n = 0;
  for (const auto& u : utts) {
    lp += scorer.logprob(u.tokens);
    n += u.length();
  }
  return std::exp(-lp / static_cast<double>(n));
}

double speaker_similarity(const MatF& prompt_frames, const MatF& continuation_frames,
                          const RenderSpec& render) {
  FLOWSLM_REQUIRE(prompt_frames.rows() >= 4 && continuation_frames.rows() >= 4,
                  "speaker_similarity: both inputs need at least 4 frames");
  const VecD a = recover_attribute(prompt_frames, render);
  const VecD b = recover_attribute(continuation_frames, render);
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

namespace {

void moments(const MatD& x, VecD& mean, MatD& cov) {
  mean = x.colwise().mean().transpose();
  const MatD centered = x.rowwise() - mean.transpose();
  cov = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  cov.diagonal().array() += 1e-6;
}

MatD sqrt_psd(const MatD& m) {
  Eigen::SelfAdjointEigenSolver<MatD> es(m);
  if (es.info() != Eigen::Success) throw NumericalError("frechet_distance: eigensolver failed");
  const VecD ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const MatD& a, const MatD& b) {
  FLOWSLM_REQUIRE(a.cols() == b.cols() && a.cols() >= 1, "frechet_distance: dimension mismatch");
  FLOWSLM_REQUIRE(a.rows() >= a.cols() + 1 && b.rows() >= b.cols() + 1,
                  "frechet_distance: each set needs at least dim+1 samples");
  VecD ma, mb;
  MatD ca, cb;
  moments(a, ma, ca);
  moments(b, mb, cb);
  // Tr((Ca Cb)^1/2) = Tr((Ca^1/2 Cb Ca^1/2)^1/2), the latter symmetric.
  const MatD sa = sqrt_psd(ca);
  MatD inner = sa * cb * sa;
  inner = (inner + inner.transpose()) / 2.0;
  Eigen::SelfAdjointEigenSolver<MatD> es(inner, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("frechet_distance: eigensolver failed");
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (ma - mb).squaredNorm() + ca.trace() + cb.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, d);
}

double mean_flow_loss(const FlowSlm<float>& model, const Utterance& utt, std::uint64_t seed) {
  const ModelConfig& mc = model.config();
  FLOWSLM_REQUIRE(mc.cfm_enabled, "mean_flow_loss: model has no CFM head");
  constexpr int kGrid = 8;
  const int m = utt.length();
  const int e = mc.embed_dim;
  const MatF ctx = model.context_matrix(utt);
  const int n = m * kGrid;
  MatF xt(n, e), target(n, e), contexts(n, mc.d_model);
  std::vector<float> ts(n);
  std::vector<std::vector<int>> toks(n);
  const std::vector<char> drop(n, 0);
  const auto smin = static_cast<float>(mc.sigma_min);
  Rng rng = Rng::derive(seed, "flow-loss");
  for (int j = 0; j < m; ++j) {
    std::vector<int> z(mc.k_future);
    for (int i = 0; i < mc.k_future; ++i) z[i] = j + i < m ? utt.tokens[j + i] : -1;
    const VecF x1 = utt.embeddings.row(j).transpose();
    for (int g = 0; g < kGrid; ++g) {
      const int r = j * kGrid + g;
      ts[r] = static_cast<float>((g + 0.5) / kGrid);
      VecF x0(e);
      for (int c = 0; c < e; ++c) x0[c] = static_cast<float>(rng.normal());
      xt.row(r) = ot_flow<float>(ts[r], x0, x1, smin).transpose();
      target.row(r) = ot_target_field<float>(x0, x1, smin).transpose();
      contexts.row(r) = ctx.row(j);
      toks[r] = z;
    }
  }
  const MatF v = model.cfm_head_batch(xt, ts, contexts, toks, drop);
  double total = 0.0;
  for (int r = 0; r < n; ++r) total += static_cast<double>((v.row(r) - target.row(r)).squaredNorm());
  return total / n;
}

double acoustic_consistency_score(const FlowSlm<float>& model, const MinimalPair& pair,
                                  std::uint64_t seed) {
  FLOWSLM_REQUIRE(pair.positive.tokens == pair.negative.tokens,
                  "acoustic_consistency_score: pair members must share token content");
  const double a = mean_flow_loss(model, pair.positive, seed);
  const double b = mean_flow_loss(model, pair.negative, seed);
  if (a < b) return 1.0;
  if (a == b) return 0.5;
  return 0.0;
}

}  // namespace flowslm
