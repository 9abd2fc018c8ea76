#pragma once

// Procedural stand-in for a frozen speech encoder: a stochastic word grammar
// produces semantic token streams, and a linear renderer turns them into
// continuous frames carrying token content, a look-ahead coarticulation leak,
// a per-utterance speaker attribute, and slowly varying AR(1) noise.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowslm/common.hpp"
#include "flowslm/rng.hpp"

namespace flowslm {

enum class WordClass : int { kSubj = 0, kVerb = 1, kObj = 2, kFiller = 3 };
inline constexpr int kNumWordClasses = 4;
std::string to_string(WordClass c);
WordClass word_class_from_string(const std::string& s);

/// Knobs from which a GrammarSpec is procedurally built.
struct GrammarOptions {
  int vocab_size = 64;
  int n_words = 40;
  int min_word_len = 2;
  int max_word_len = 4;
  /// Fraction of words per class, indexed by WordClass.
  std::vector<double> class_fractions = {0.3, 0.2, 0.3, 0.2};
  std::vector<std::vector<WordClass>> templates = {
      {WordClass::kSubj, WordClass::kVerb, WordClass::kObj},
      {WordClass::kFiller, WordClass::kSubj, WordClass::kVerb, WordClass::kObj},
      {WordClass::kSubj, WordClass::kVerb, WordClass::kObj, WordClass::kFiller,
       WordClass::kObj},
  };
  int min_sentences = 1;
  int max_sentences = 2;
  /// Per-frame probability that a silence run ends (mean run length 1/p).
  double silence_stop_prob = 0.5;
  double smoothing = 1e-6;
  std::uint64_t seed = 1;
};

struct GrammarSpec {
  int vocab_size = 0;
  std::vector<std::vector<int>> lexicon;      // word id -> token ids (all >= 2)
  std::vector<WordClass> word_classes;        // word id -> class
  std::vector<std::vector<WordClass>> templates;
  int min_sentences = 1;
  int max_sentences = 1;
  double silence_stop_prob = 0.5;
  double smoothing = 1e-6;
  std::uint64_t seed = 0;

  /// Throws ConfigError if any structural invariant fails.
  void validate() const;
  std::vector<int> words_of_class(WordClass c) const;
  /// Word id whose token sequence equals `tokens`, if any.
  std::optional<int> find_word(const std::vector<int>& tokens) const;
  /// True if the class sequence splits into an allowed number of templates.
  bool parses(const std::vector<WordClass>& classes) const;
};

GrammarSpec make_grammar(const GrammarOptions& opts);

struct RenderOptions {
  int embed_dim = 32;
  int token_dim = 8;
  int attr_dim = 8;
  int n_speakers = 8;
  double attr_scale = 3.0;
  double leak_beta = 0.5;
  double smooth_alpha = 0.9;
  double noise_sigma = 0.1;
  std::uint64_t seed = 2;
};

/// x_m = W_cur cb(z_m) + beta W_next cb(z_{m+1}) + attr_projection^T a + c_m,
/// c_m = alpha c_{m-1} + sqrt(1 - alpha^2) eps_m, eps_m ~ N(0, sigma^2 I).
struct RenderSpec {
  int embed_dim = 0;
  int attr_dim = 0;
  MatD token_codebook;    // vocab x token_dim
  MatD current_mixing;    // embed_dim x token_dim
  MatD lookahead_mixing;  // embed_dim x token_dim
  MatD attr_projection;   // attr_dim x embed_dim
  MatD speakers;          // n_speakers x attr_dim
  double leak_beta = 0.5;
  double smooth_alpha = 0.9;
  double noise_sigma = 0.1;

  void validate() const;
  int token_dim() const { return static_cast<int>(token_codebook.cols()); }
  int vocab_size() const { return static_cast<int>(token_codebook.rows()); }
  /// The full mixing matrix over [cb(z_m); beta cb(z_{m+1}); a] (noise excluded).
  MatD signal_mixing() const;
};

RenderSpec make_render_spec(const RenderOptions& opts, int vocab_size);

struct Utterance {
  std::vector<int> tokens;
  MatF embeddings;  // frames x embed_dim
  VecF attribute;
  int speaker = -1;

  int length() const { return static_cast<int>(tokens.size()); }
  bool operator==(const Utterance&) const = default;
};

struct WordSpan {
  int start = 0;  // first token index
  int word = 0;
};

/// A token stream together with the word-level derivation that produced it.
struct Derivation {
  std::vector<int> tokens;
  std::vector<WordSpan> words;
  std::vector<int> sentence_starts;  // index into `words`
};

Derivation sample_derivation(const GrammarSpec& grammar, Rng& rng);

/// Renders frames for `tokens`. `attribute_at(m)` supplies the attribute for
/// frame m; noise is drawn from `rng` in frame order.
MatF render_frames(const std::vector<int>& tokens, const RenderSpec& render,
                   const std::vector<VecD>& attributes, Rng& rng);
Utterance render_utterance(const std::vector<int>& tokens, const RenderSpec& render,
                           int speaker, Rng& rng);
Utterance render_with_attribute(const std::vector<int>& tokens, const RenderSpec& render,
                                const VecD& attribute, Rng& rng);

/// Utterance i is drawn from the stream Rng::derive(seed, i).
std::vector<Utterance> generate_corpus(const GrammarSpec& grammar, const RenderSpec& render,
                                       int n_utterances, std::uint64_t seed);

/// The encoder seam: in this synthetic setting the generator is the encoder.
struct EncodedUtterance {
  std::vector<int> tokens;
  MatF embeddings;
};
EncodedUtterance encode(const Utterance& source);

/// Least-squares estimate of the speaker attribute from the frame mean.
VecD recover_attribute(const MatF& embeddings, const RenderSpec& render);

enum class PairKind { kLexical, kSyntactic };
std::string to_string(PairKind k);

struct MinimalPair {
  Utterance positive;
  Utterance negative;
};

struct MinimalPairSet {
  PairKind kind = PairKind::kLexical;
  std::vector<MinimalPair> pairs;
};

MinimalPairSet make_minimal_pairs(const GrammarSpec& grammar, const RenderSpec& render,
                                  PairKind kind, int n_pairs, std::uint64_t seed);

/// Same tokens and noise; the negative switches speaker at a word boundary.
MinimalPair make_consistency_pair(const GrammarSpec& grammar, const RenderSpec& render,
                                  Rng& rng);

/// Exact scorer for token streams under the grammar's generative process,
/// compiled to a probabilistic automaton. Non-words and out-of-class words
/// get smoothing mass per word slot; sequences the automaton cannot produce
/// at all fall back to an i.i.d. token model with the same smoothing weight.
class GrammarScorer {
 public:
  explicit GrammarScorer(const GrammarSpec& grammar);

  /// log P(tokens is a complete utterance).
  double logprob(const std::vector<int>& tokens) const;
  /// log P(a complete utterance starts with `tokens`).
  double prefix_logprob(const std::vector<int>& tokens) const;
  /// log P(continuation follows prefix). If `complete`, the continuation
  /// must end the utterance.
  double conditional_logprob(const std::vector<int>& prefix,
                             const std::vector<int>& continuation, bool complete) const;

  int num_states() const { return static_cast<int>(states_.size()); }

 private:
  struct Arc {
    int token;
    double prob;
    int next;
  };
  struct State {
    std::vector<Arc> arcs;
  };
  // Returns log of automaton mass; -inf if zero.
  double automaton_log_mass(const std::vector<int>& tokens, bool complete) const;
  double fallback_logprob(std::size_t len, bool complete) const;

  int vocab_size_;
  double smoothing_;
  double fallback_continue_;
  std::vector<State> states_;
  std::vector<std::pair<int, double>> initial_;
  int final_state_ = -1;
};

double grammar_logprob(const std::vector<int>& tokens, const GrammarSpec& grammar);

// Serialization of specs (embedded in manifests and checkpoints).
nlohmann::json to_json(const GrammarSpec& g);
GrammarSpec grammar_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RenderSpec& r);
RenderSpec render_from_json(const nlohmann::json& j);

// Binary shards. Layout (little-endian):
//   char[8] "FSLMSHD1", u32 version, u32 count, u32 embed_dim, u32 attr_dim,
//   then per utterance: u32 frames, i32 speaker, f32[attr_dim] attribute,
//   u16[frames] tokens, f32[frames*embed_dim] embeddings (row-major).
inline constexpr std::uint32_t kShardVersion = 1;
void write_shard(const std::filesystem::path& path, const std::vector<Utterance>& utterances,
                 int embed_dim, int attr_dim);
std::vector<Utterance> read_shard(const std::filesystem::path& path);

void write_pair_shard(const std::filesystem::path& path, const MinimalPairSet& set,
                      int embed_dim, int attr_dim);
MinimalPairSet read_pair_shard(const std::filesystem::path& path, PairKind kind);

}  // namespace flowslm
