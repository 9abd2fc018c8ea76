#include "flowslm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace flowslm {

std::string to_string(WordClass c) {
  switch (c) {
    case WordClass::kSubj: return "SUBJ";
    case WordClass::kVerb: return "VERB";
    case WordClass::kObj: return "OBJ";
    case WordClass::kFiller: return "FILLER";
  }
  return "?";
}

WordClass word_class_from_string(const std::string& s) {
  if (s == "SUBJ") return WordClass::kSubj;
  if (s == "VERB") return WordClass::kVerb;
  if (s == "OBJ") return WordClass::kObj;
  if (s == "FILLER") return WordClass::kFiller;
  throw ConfigError("unknown word class '" + s + "'");
}

std::string to_string(PairKind k) { return k == PairKind::kLexical ? "lexical" : "syntactic"; }

// ---------------------------------------------------------------------------
// Grammar

void GrammarSpec::validate() const {
  if (vocab_size < kFirstWordId + 1) {
    throw ConfigError("grammar: vocab_size " + std::to_string(vocab_size) +
                      " leaves no ids after the reserved silence/EOS ids");
  }
  if (vocab_size > 65536) throw ConfigError("grammar: vocab_size exceeds 16-bit token ids");
  if (lexicon.empty()) throw ConfigError("grammar: empty lexicon");
  if (lexicon.size() != word_classes.size()) {
    throw ConfigError("grammar: lexicon and word_classes differ in size");
  }
  std::set<std::vector<int>> seen;
  for (std::size_t w = 0; w < lexicon.size(); ++w) {
    if (lexicon[w].empty()) throw ConfigError("grammar: empty word " + std::to_string(w));
    for (int tok : lexicon[w]) {
      if (tok < kFirstWordId || tok >= vocab_size) {
        throw ConfigError("grammar: word " + std::to_string(w) + " uses reserved or out-of-range id " +
                          std::to_string(tok));
      }
    }
    if (!seen.insert(lexicon[w]).second) {
      throw ConfigError("grammar: duplicate lexicon entry for word " + std::to_string(w));
    }
  }
  if (templates.empty()) throw ConfigError("grammar: no templates");
  for (const auto& tmpl : templates) {
    if (tmpl.empty()) throw ConfigError("grammar: empty template");
    for (WordClass c : tmpl) {
      if (words_of_class(c).empty()) {
        throw ConfigError("grammar: template references empty class " + to_string(c));
      }
    }
  }
  if (min_sentences < 1 || max_sentences < min_sentences) {
    throw ConfigError("grammar: invalid sentence-count range");
  }
  if (!(silence_stop_prob > 0.0 && silence_stop_prob <= 1.0)) {
    throw ConfigError("grammar: silence_stop_prob must lie in (0,1]");
  }
  if (!(smoothing > 0.0 && smoothing < 1.0)) {
    throw ConfigError("grammar: smoothing must lie in (0,1)");
  }
}

std::vector<int> GrammarSpec::words_of_class(WordClass c) const {
  std::vector<int> out;
  for (std::size_t w = 0; w < word_classes.size(); ++w) {
    if (word_classes[w] == c) out.push_back(static_cast<int>(w));
  }
  return out;
}

std::optional<int> GrammarSpec::find_word(const std::vector<int>& tokens) const {
  for (std::size_t w = 0; w < lexicon.size(); ++w) {
    if (lexicon[w] == tokens) return static_cast<int>(w);
  }
  return std::nullopt;
}

bool GrammarSpec::parses(const std::vector<WordClass>& classes) const {
  // reachable[i] = set of sentence counts that exactly cover classes[0, i).
  const std::size_t n = classes.size();
  std::vector<std::set<int>> reachable(n + 1);
  reachable[0].insert(0);
  for (std::size_t i = 0; i < n; ++i) {
    if (reachable[i].empty()) continue;
    for (const auto& tmpl : templates) {
      if (i + tmpl.size() > n) continue;
      if (!std::equal(tmpl.begin(), tmpl.end(), classes.begin() + static_cast<long>(i))) continue;
      for (int k : reachable[i]) {
        if (k + 1 <= max_sentences) reachable[i + tmpl.size()].insert(k + 1);
      }
    }
  }
  for (int k : reachable[n]) {
    if (k >= min_sentences && k <= max_sentences) return true;
  }
  return false;
}

GrammarSpec make_grammar(const GrammarOptions& opts) {
  GrammarSpec g;
  g.vocab_size = opts.vocab_size;
  g.templates = opts.templates;
  g.min_sentences = opts.min_sentences;
  g.max_sentences = opts.max_sentences;
  g.silence_stop_prob = opts.silence_stop_prob;
  g.smoothing = opts.smoothing;
  g.seed = opts.seed;
  if (opts.vocab_size < kFirstWordId + 1) {
    throw ConfigError("grammar: vocab_size " + std::to_string(opts.vocab_size) +
                      " leaves no ids after the reserved silence/EOS ids");
  }
  if (opts.n_words < kNumWordClasses) throw ConfigError("grammar: need at least one word per class");
  if (opts.min_word_len < 1 || opts.max_word_len < opts.min_word_len) {
    throw ConfigError("grammar: invalid word length range");
  }
  if (opts.class_fractions.size() != kNumWordClasses) {
    throw ConfigError("grammar: class_fractions needs one entry per class");
  }
  const int symbols = opts.vocab_size - kFirstWordId;
  double capacity = 0.0;
  for (int len = opts.min_word_len; len <= opts.max_word_len; ++len) {
    capacity += std::pow(static_cast<double>(symbols), len);
  }
  if (capacity < 2.0 * opts.n_words) {
    throw ConfigError("grammar: vocabulary too small for a lexicon of " +
                      std::to_string(opts.n_words) + " words");
  }

  Rng rng = Rng::derive(opts.seed, "lexicon");
  std::set<std::vector<int>> seen;
  while (static_cast<int>(g.lexicon.size()) < opts.n_words) {
    const int len = opts.min_word_len +
                    static_cast<int>(rng.below(opts.max_word_len - opts.min_word_len + 1));
    std::vector<int> word(len);
    for (int& tok : word) tok = kFirstWordId + static_cast<int>(rng.below(symbols));
    if (seen.insert(word).second) g.lexicon.push_back(std::move(word));
  }

  std::vector<int> counts(kNumWordClasses);
  int assigned = 0;
  for (int c = 0; c < kNumWordClasses; ++c) {
    counts[c] = std::max(1, static_cast<int>(std::lround(opts.class_fractions[c] * opts.n_words)));
    assigned += counts[c];
  }
  // Absorb rounding drift in the largest class.
  const auto largest = std::max_element(counts.begin(), counts.end()) - counts.begin();
  counts[largest] += opts.n_words - assigned;
  if (counts[largest] < 1) throw ConfigError("grammar: class_fractions leave a class empty");
  for (int c = 0; c < kNumWordClasses; ++c) {
    for (int i = 0; i < counts[c]; ++i) g.word_classes.push_back(static_cast<WordClass>(c));
  }
  g.validate();
  return g;
}

namespace {

void emit_silence(std::vector<int>& tokens, int run) {
  tokens.insert(tokens.end(), static_cast<std::size_t>(run), kSilenceId);
}

struct RawDerivation {
  std::vector<int> words;
  std::vector<int> silence_runs;  // before each word, then trailing
  std::vector<int> sentence_starts;
};

RawDerivation sample_raw(const GrammarSpec& g, Rng& rng) {
  RawDerivation d;
  const int n = g.min_sentences + static_cast<int>(rng.below(g.max_sentences - g.min_sentences + 1));
  for (int s = 0; s < n; ++s) {
    const auto& tmpl = g.templates[rng.below(g.templates.size())];
    d.sentence_starts.push_back(static_cast<int>(d.words.size()));
    for (WordClass c : tmpl) {
      d.silence_runs.push_back(rng.geometric_at_least_one(g.silence_stop_prob));
      const auto members = g.words_of_class(c);
      d.words.push_back(members[rng.below(members.size())]);
    }
  }
  d.silence_runs.push_back(rng.geometric_at_least_one(g.silence_stop_prob));
  return d;
}

Derivation realize(const GrammarSpec& g, const RawDerivation& raw,
                   const std::vector<std::vector<int>>& word_tokens) {
  Derivation d;
  d.sentence_starts = raw.sentence_starts;
  for (std::size_t i = 0; i < raw.words.size(); ++i) {
    emit_silence(d.tokens, raw.silence_runs[i]);
    d.words.push_back({static_cast<int>(d.tokens.size()), raw.words[i]});
    const auto& toks = word_tokens[i];
    d.tokens.insert(d.tokens.end(), toks.begin(), toks.end());
  }
  emit_silence(d.tokens, raw.silence_runs.back());
  d.tokens.push_back(kEosId);
  (void)g;
  return d;
}

Derivation realize(const GrammarSpec& g, const RawDerivation& raw) {
  std::vector<std::vector<int>> toks;
  for (int w : raw.words) toks.push_back(g.lexicon[w]);
  return realize(g, raw, toks);
}

}  // namespace

Derivation sample_derivation(const GrammarSpec& grammar, Rng& rng) {
  return realize(grammar, sample_raw(grammar, rng));
}

// ---------------------------------------------------------------------------
// Rendering

void RenderSpec::validate() const {
  if (embed_dim < 1 || attr_dim < 1) throw ConfigError("render: dimensions must be positive");
  if (token_codebook.rows() < kFirstWordId + 1) throw ConfigError("render: codebook too small");
  const int t = token_dim();
  if (current_mixing.rows() != embed_dim || current_mixing.cols() != t ||
      lookahead_mixing.rows() != embed_dim || lookahead_mixing.cols() != t) {
    throw ConfigError("render: mixing matrix shape mismatch");
  }
  if (attr_projection.rows() != attr_dim || attr_projection.cols() != embed_dim) {
    throw ConfigError("render: attr_projection must be attr_dim x embed_dim");
  }
  if (speakers.rows() < 1 || speakers.cols() != attr_dim) {
    throw ConfigError("render: speaker table must be n_speakers x attr_dim");
  }
  if (leak_beta < 0.0) throw ConfigError("render: leak_beta must be >= 0");
  if (!(smooth_alpha >= 0.0 && smooth_alpha < 1.0)) {
    throw ConfigError("render: smooth_alpha must lie in [0,1)");
  }
  if (noise_sigma < 0.0) throw ConfigError("render: noise_sigma must be >= 0");
}

MatD RenderSpec::signal_mixing() const {
  const int t = token_dim();
  MatD w(embed_dim, 2 * t + attr_dim);
  w.leftCols(t) = current_mixing;
  w.middleCols(t, t) = lookahead_mixing;
  w.rightCols(attr_dim) = attr_projection.transpose();
  return w;
}

namespace {
MatD random_orthonormal_columns(int rows, int cols, Rng& rng) {
  MatD g(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<MatD> qr(g);
  MatD q = qr.householderQ() * MatD::Identity(rows, cols);
  return q;
}
}  // namespace

RenderSpec make_render_spec(const RenderOptions& opts, int vocab_size) {
  if (2 * opts.token_dim + opts.attr_dim > opts.embed_dim) {
    throw ConfigError("render: embed_dim must be >= 2*token_dim + attr_dim for a full-rank mixing");
  }
  if (opts.n_speakers < 1) throw ConfigError("render: n_speakers must be >= 1");
  Rng rng = Rng::derive(opts.seed, "render");
  RenderSpec r;
  r.embed_dim = opts.embed_dim;
  r.attr_dim = opts.attr_dim;
  r.leak_beta = opts.leak_beta;
  r.smooth_alpha = opts.smooth_alpha;
  r.noise_sigma = opts.noise_sigma;
  r.token_codebook.resize(vocab_size, opts.token_dim);
  for (int v = 0; v < vocab_size; ++v)
    for (int j = 0; j < opts.token_dim; ++j) r.token_codebook(v, j) = rng.normal();
  const MatD q = random_orthonormal_columns(opts.embed_dim, 2 * opts.token_dim + opts.attr_dim, rng);
  r.current_mixing = q.leftCols(opts.token_dim);
  r.lookahead_mixing = q.middleCols(opts.token_dim, opts.token_dim);
  r.attr_projection = q.rightCols(opts.attr_dim).transpose();
  // Speakers: orthogonal directions when the pool fits, random unit vectors otherwise.
  r.speakers.resize(opts.n_speakers, opts.attr_dim);
  if (opts.n_speakers <= opts.attr_dim) {
    const MatD dirs = random_orthonormal_columns(opts.attr_dim, opts.n_speakers, rng);
    r.speakers = opts.attr_scale * dirs.transpose();
  } else {
    for (int s = 0; s < opts.n_speakers; ++s) {
      VecD v(opts.attr_dim);
      for (int j = 0; j < opts.attr_dim; ++j) v[j] = rng.normal();
      r.speakers.row(s) = opts.attr_scale * v.normalized().transpose();
    }
  }
  r.validate();
  return r;
}

MatF render_frames(const std::vector<int>& tokens, const RenderSpec& render,
                   const std::vector<VecD>& attributes, Rng& rng) {
  const int m_total = static_cast<int>(tokens.size());
  FLOWSLM_REQUIRE(static_cast<int>(attributes.size()) == m_total,
                  "render_frames: one attribute per frame required");
  const int d = render.embed_dim;
  MatF out(m_total, d);
  VecD noise = VecD::Zero(d);
  const double innovation = std::sqrt(1.0 - render.smooth_alpha * render.smooth_alpha);
  for (int m = 0; m < m_total; ++m) {
    VecD eps(d);
    for (int j = 0; j < d; ++j) eps[j] = render.noise_sigma * rng.normal();
    noise = (m == 0) ? eps : VecD(render.smooth_alpha * noise + innovation * eps);
    const int cur = tokens[m];
    const int nxt = (m + 1 < m_total) ? tokens[m + 1] : kEosId;
    FLOWSLM_REQUIRE(cur >= 0 && cur < render.vocab_size(), "render_frames: token out of range");
    FLOWSLM_REQUIRE(attributes[m].size() == render.attr_dim, "render_frames: attribute dimension");
    VecD x = render.current_mixing * render.token_codebook.row(cur).transpose() +
             render.leak_beta * (render.lookahead_mixing * render.token_codebook.row(nxt).transpose()) +
             render.attr_projection.transpose() * attributes[m] + noise;
    out.row(m) = x.cast<float>().transpose();
  }
  return out;
}

Utterance render_with_attribute(const std::vector<int>& tokens, const RenderSpec& render,
                                const VecD& attribute, Rng& rng) {
  Utterance u;
  u.tokens = tokens;
  u.embeddings = render_frames(tokens, render, std::vector<VecD>(tokens.size(), attribute), rng);
  u.attribute = attribute.cast<float>();
  return u;
}

Utterance render_utterance(const std::vector<int>& tokens, const RenderSpec& render,
                           int speaker, Rng& rng) {
  FLOWSLM_REQUIRE(speaker >= 0 && speaker < render.speakers.rows(), "render_utterance: bad speaker");
  Utterance u = render_with_attribute(tokens, render, render.speakers.row(speaker).transpose(), rng);
  u.speaker = speaker;
  return u;
}

std::vector<Utterance> generate_corpus(const GrammarSpec& grammar, const RenderSpec& render,
                                       int n_utterances, std::uint64_t seed) {
  FLOWSLM_REQUIRE(n_utterances >= 1, "generate_corpus: n_utterances must be >= 1");
  grammar.validate();
  render.validate();
  if (render.vocab_size() != grammar.vocab_size) {
    throw ConfigError("generate_corpus: render codebook and grammar vocab differ");
  }
  std::vector<Utterance> out;
  out.reserve(n_utterances);
  for (int i = 0; i < n_utterances; ++i) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(i));
    const Derivation d = sample_derivation(grammar, rng);
    const int speaker = static_cast<int>(rng.below(render.speakers.rows()));
    out.push_back(render_utterance(d.tokens, render, speaker, rng));
  }
  return out;
}

EncodedUtterance encode(const Utterance& source) { return {source.tokens, source.embeddings}; }

VecD recover_attribute(const MatF& embeddings, const RenderSpec& render) {
  FLOWSLM_REQUIRE(embeddings.rows() >= 4, "recover_attribute: need at least 4 frames");
  FLOWSLM_REQUIRE(embeddings.cols() == render.embed_dim, "recover_attribute: frame dimension");
  const VecD mean = embeddings.cast<double>().colwise().mean().transpose();
  const MatD w = render.signal_mixing();
  Eigen::ColPivHouseholderQR<MatD> qr(w);
  if (qr.rank() < w.cols()) {
    throw ConfigError("recover_attribute: rank-deficient attribute projection");
  }
  const VecD theta = qr.solve(mean);
  return theta.tail(render.attr_dim);
}

// ---------------------------------------------------------------------------
// Minimal pairs

namespace {

constexpr int kMaxPairRetries = 200;

std::optional<MinimalPair> try_lexical(const GrammarSpec& g, const RenderSpec& r, Rng& rng) {
  const RawDerivation raw = sample_raw(g, rng);
  const std::size_t pick = rng.below(raw.words.size());
  std::vector<std::vector<int>> toks;
  for (int w : raw.words) toks.push_back(g.lexicon[w]);
  std::vector<int> corrupted = toks[pick];
  const int len = static_cast<int>(corrupted.size());
  const int pos = len > 1 ? 1 + static_cast<int>(rng.below(len - 1)) : 0;
  const int symbols = g.vocab_size - kFirstWordId;
  if (symbols < 2) return std::nullopt;
  int replacement = kFirstWordId + static_cast<int>(rng.below(symbols - 1));
  if (replacement >= corrupted[pos]) ++replacement;  // never the original id
  corrupted[pos] = replacement;
  if (g.find_word(corrupted)) return std::nullopt;
  auto neg_toks = toks;
  neg_toks[pick] = corrupted;
  const Derivation pos_d = realize(g, raw, toks);
  const Derivation neg_d = realize(g, raw, neg_toks);
  const int speaker = static_cast<int>(rng.below(r.speakers.rows()));
  const std::uint64_t noise_seed = rng.next_u64();
  Rng n1(noise_seed), n2(noise_seed);
  return MinimalPair{render_utterance(pos_d.tokens, r, speaker, n1),
                     render_utterance(neg_d.tokens, r, speaker, n2)};
}

std::optional<MinimalPair> try_syntactic(const GrammarSpec& g, const RenderSpec& r, Rng& rng) {
  const RawDerivation raw = sample_raw(g, rng);
  // Candidate (subject, object) slots within one sentence.
  std::vector<std::pair<int, int>> swaps;
  for (std::size_t s = 0; s < raw.sentence_starts.size(); ++s) {
    const int begin = raw.sentence_starts[s];
    const int end = s + 1 < raw.sentence_starts.size() ? raw.sentence_starts[s + 1]
                                                       : static_cast<int>(raw.words.size());
    for (int i = begin; i < end; ++i) {
      if (g.word_classes[raw.words[i]] != WordClass::kSubj) continue;
      for (int j = begin; j < end; ++j) {
        if (g.word_classes[raw.words[j]] == WordClass::kObj) swaps.emplace_back(i, j);
      }
    }
  }
  if (swaps.empty()) return std::nullopt;
  const auto [i, j] = swaps[rng.below(swaps.size())];
  RawDerivation neg = raw;
  std::swap(neg.words[i], neg.words[j]);
  std::vector<WordClass> classes;
  for (int w : neg.words) classes.push_back(g.word_classes[w]);
  if (g.parses(classes)) return std::nullopt;
  const int speaker = static_cast<int>(rng.below(r.speakers.rows()));
  const std::uint64_t noise_seed = rng.next_u64();
  Rng n1(noise_seed), n2(noise_seed);
  return MinimalPair{render_utterance(realize(g, raw).tokens, r, speaker, n1),
                     render_utterance(realize(g, neg).tokens, r, speaker, n2)};
}

}  // namespace

MinimalPairSet make_minimal_pairs(const GrammarSpec& grammar, const RenderSpec& render,
                                  PairKind kind, int n_pairs, std::uint64_t seed) {
  FLOWSLM_REQUIRE(n_pairs >= 0, "make_minimal_pairs: negative pair count");
  grammar.validate();
  MinimalPairSet set;
  set.kind = kind;
  for (int p = 0; p < n_pairs; ++p) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(p));
    std::optional<MinimalPair> pair;
    for (int attempt = 0; attempt < kMaxPairRetries && !pair; ++attempt) {
      pair = kind == PairKind::kLexical ? try_lexical(grammar, render, rng)
                                        : try_syntactic(grammar, render, rng);
    }
    if (!pair) {
      throw GenerationError("make_minimal_pairs: no valid " + to_string(kind) +
                            " negative for pair " + std::to_string(p) + " after " +
                            std::to_string(kMaxPairRetries) + " retries");
    }
    set.pairs.push_back(std::move(*pair));
  }
  return set;
}

MinimalPair make_consistency_pair(const GrammarSpec& grammar, const RenderSpec& render, Rng& rng) {
  if (render.speakers.rows() < 2) throw ConfigError("consistency pair needs at least two speakers");
  Derivation d;
  do {
    d = sample_derivation(grammar, rng);
  } while (d.words.size() < 2);
  const std::size_t boundary_word = 1 + rng.below(d.words.size() - 1);
  const int boundary = d.words[boundary_word].start;
  const int a = static_cast<int>(rng.below(render.speakers.rows()));
  int b = static_cast<int>(rng.below(render.speakers.rows() - 1));
  if (b >= a) ++b;
  const VecD attr_a = render.speakers.row(a).transpose();
  const VecD attr_b = render.speakers.row(b).transpose();
  const std::uint64_t noise_seed = rng.next_u64();
  Rng n1(noise_seed), n2(noise_seed);
  Utterance pos = render_utterance(d.tokens, render, a, n1);
  std::vector<VecD> attrs(d.tokens.size(), attr_a);
  for (std::size_t m = boundary; m < attrs.size(); ++m) attrs[m] = attr_b;
  Utterance neg;
  neg.tokens = d.tokens;
  neg.embeddings = render_frames(d.tokens, render, attrs, n2);
  neg.attribute = attr_a.cast<float>();
  neg.speaker = a;
  return {std::move(pos), std::move(neg)};
}

// ---------------------------------------------------------------------------
// Exact scorer

GrammarScorer::GrammarScorer(const GrammarSpec& g)
    : vocab_size_(g.vocab_size), smoothing_(g.smoothing), fallback_continue_(1.0 - 1.0 / 40.0) {
  g.validate();
  const double p_stop = g.silence_stop_prob;
  const double lambda = g.smoothing;
  const int symbols = g.vocab_size - kFirstWordId;

  // State keys: {kind, n, s, t, j, extra}.
  enum Kind { kPreSent, kPre, kInSil, kNonWord, kWord, kPreTrail, kInSilTrail, kFinal };
  std::map<std::array<int, 6>, int> ids;
  auto id_of = [&](std::array<int, 6> key) {
    auto [it, inserted] = ids.emplace(key, static_cast<int>(states_.size()));
    if (inserted) states_.emplace_back();
    return it->second;
  };
  std::vector<std::vector<int>> members(kNumWordClasses);
  for (int c = 0; c < kNumWordClasses; ++c) members[c] = g.words_of_class(static_cast<WordClass>(c));

  const int pre_trail = id_of({kPreTrail, 0, 0, 0, 0, 0});
  const int in_sil_trail = id_of({kInSilTrail, 0, 0, 0, 0, 0});
  final_state_ = id_of({kFinal, 0, 0, 0, 0, 0});
  const int n_templates = static_cast<int>(g.templates.size());

  // State following the word in slot (n, s, t, j).
  auto next_of = [&](int n, int s, int t, int j) {
    if (j + 1 < static_cast<int>(g.templates[t].size())) return id_of({kPre, n, s, t, j + 1, 0});
    if (s + 1 < n) return id_of({kPreSent, n, s + 1, 0, 0, 0});
    return pre_trail;
  };

  // Arcs are filled once every referenced state exists; PRE-type states are
  // completed first because non-word states copy their arcs.
  struct Pending {
    int n, s, t, j;
  };
  std::vector<Pending> slots;
  for (int n = g.min_sentences; n <= g.max_sentences; ++n) {
    initial_.emplace_back(id_of({kPreSent, n, 0, 0, 0, 0}),
                          1.0 / (g.max_sentences - g.min_sentences + 1));
    for (int s = 0; s < n; ++s) {
      const int pre_sent = id_of({kPreSent, n, s, 0, 0, 0});
      for (int t = 0; t < n_templates; ++t) {
        const int first_sil = id_of({kInSil, n, s, t, 0, 0});
        states_[pre_sent].arcs.push_back({kSilenceId, 1.0 / n_templates, first_sil});
        for (int j = 0; j < static_cast<int>(g.templates[t].size()); ++j) {
          slots.push_back({n, s, t, j});
          if (j > 0) {
            // id_of may grow states_, so resolve both ids before indexing.
            const int pre = id_of({kPre, n, s, t, j, 0});
            const int sil = id_of({kInSil, n, s, t, j, 0});
            states_[pre].arcs.push_back({kSilenceId, 1.0, sil});
          }
        }
      }
    }
  }
  states_[pre_trail].arcs.push_back({kSilenceId, 1.0, in_sil_trail});
  states_[in_sil_trail].arcs.push_back({kSilenceId, 1.0 - p_stop, in_sil_trail});
  states_[in_sil_trail].arcs.push_back({kEosId, p_stop, final_state_});

  for (const auto& [n, s, t, j] : slots) {
    const int in_sil = id_of({kInSil, n, s, t, j, 0});
    const int nonword = id_of({kNonWord, n, s, t, j, 0});
    const int next = next_of(n, s, t, j);
    const auto& cls = members[static_cast<int>(g.templates[t][j])];
    if (p_stop < 1.0) states_[in_sil].arcs.push_back({kSilenceId, 1.0 - p_stop, in_sil});
    for (int w : cls) {
      const auto& toks = g.lexicon[w];
      const int after_first =
          toks.size() > 1 ? id_of({kWord, n, s, t, j, w * 64 + 1}) : next;
      states_[in_sil].arcs.push_back({toks[0], p_stop * (1.0 - lambda) / cls.size(), after_first});
      for (std::size_t pos = 1; pos < toks.size(); ++pos) {
        const int here = id_of({kWord, n, s, t, j, w * 64 + static_cast<int>(pos)});
        const int there = pos + 1 < toks.size()
                              ? id_of({kWord, n, s, t, j, w * 64 + static_cast<int>(pos) + 1})
                              : next;
        states_[here].arcs.push_back({toks[pos], 1.0, there});
      }
    }
    for (int c = 0; c < symbols; ++c) {
      states_[in_sil].arcs.push_back({kFirstWordId + c, p_stop * lambda / symbols, nonword});
      states_[nonword].arcs.push_back({kFirstWordId + c, 0.5 / symbols, nonword});
    }
  }
  // Non-word termination folds in the arcs of the following PRE state.
  for (const auto& [n, s, t, j] : slots) {
    const int nonword = id_of({kNonWord, n, s, t, j, 0});
    const int next = next_of(n, s, t, j);
    const auto next_arcs = states_[next].arcs;
    for (const Arc& a : next_arcs) states_[nonword].arcs.push_back({a.token, 0.5 * a.prob, a.next});
  }
}

double GrammarScorer::automaton_log_mass(const std::vector<int>& tokens, bool complete) const {
  std::vector<double> alpha(states_.size(), 0.0), next(states_.size(), 0.0);
  for (const auto& [s, p] : initial_) alpha[s] += p;
  double log_scale = 0.0;
  for (int tok : tokens) {
    std::fill(next.begin(), next.end(), 0.0);
    double total = 0.0;
    for (std::size_t s = 0; s < states_.size(); ++s) {
      if (alpha[s] == 0.0) continue;
      for (const Arc& a : states_[s].arcs) {
        if (a.token == tok) {
          next[a.next] += alpha[s] * a.prob;
          total += alpha[s] * a.prob;
        }
      }
    }
    if (total <= 0.0) return -std::numeric_limits<double>::infinity();
    log_scale += std::log(total);
    for (double& v : next) v /= total;
    std::swap(alpha, next);
  }
  if (!complete) {
    double total = 0.0;
    for (double v : alpha) total += v;
    return log_scale + std::log(total);
  }
  if (alpha[final_state_] <= 0.0) return -std::numeric_limits<double>::infinity();
  return log_scale + std::log(alpha[final_state_]);
}

double GrammarScorer::fallback_logprob(std::size_t len, bool complete) const {
  const double per_token = std::log(fallback_continue_ / vocab_size_);
  return static_cast<double>(len) * per_token + (complete ? std::log(1.0 - fallback_continue_) : 0.0);
}

namespace {
double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}
}  // namespace

double GrammarScorer::logprob(const std::vector<int>& tokens) const {
  return log_add(std::log1p(-smoothing_) + automaton_log_mass(tokens, true),
                 std::log(smoothing_) + fallback_logprob(tokens.size(), true));
}

double GrammarScorer::prefix_logprob(const std::vector<int>& tokens) const {
  return log_add(std::log1p(-smoothing_) + automaton_log_mass(tokens, false),
                 std::log(smoothing_) + fallback_logprob(tokens.size(), false));
}

double GrammarScorer::conditional_logprob(const std::vector<int>& prefix,
                                          const std::vector<int>& continuation,
                                          bool complete) const {
  std::vector<int> joined = prefix;
  joined.insert(joined.end(), continuation.begin(), continuation.end());
  const double joint = complete ? logprob(joined) : prefix_logprob(joined);
  return joint - prefix_logprob(prefix);
}

double grammar_logprob(const std::vector<int>& tokens, const GrammarSpec& grammar) {
  return GrammarScorer(grammar).logprob(tokens);
}

}  // namespace flowslm
