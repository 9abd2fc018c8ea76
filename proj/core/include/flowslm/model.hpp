#pragma once

// Joint token/embedding language model: a causal transformer over past frames
// produces a context vector per position; k linear heads predict the next k
// semantic tokens; a conditional flow-matching head models the next frame
// given the context and the k tokens.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowslm/cfm_head.hpp"
#include "flowslm/common.hpp"
#include "flowslm/corpus.hpp"
#include "flowslm/params.hpp"
#include "flowslm/transformer.hpp"

namespace flowslm {

enum class InputMode { kToken, kVector };
std::string to_string(InputMode m);
InputMode input_mode_from_string(const std::string& s);

struct ModelConfig {
  InputMode input_mode = InputMode::kVector;
  int d_model = 128;
  int n_layers = 4;
  int n_heads = 4;
  int k_future = 4;
  bool cfm_enabled = true;
  int cfm_blocks = 3;
  int cfm_hidden = 256;
  int vocab_size = 64;
  int embed_dim = 32;
  int time_embed_dim = 16;
  double cond_dropout_p = 0.05;
  double sigma_min = 1e-5;
  int max_positions = 256;
  double init_std = 0.02;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

struct LossBreakdown {
  double sem_loss = 0.0;
  double cfm_loss = 0.0;
  double total = 0.0;
};

/// One utterance in a training batch plus the seed of its private noise
/// stream (flow times, prior draws, condition dropout).
struct BatchItem {
  const Utterance* utterance = nullptr;
  std::uint64_t noise_seed = 0;
};

/// Cross-entropy averaged over the k rows of `logits` (k x vocab) whose
/// target is present; targets[i] < 0 marks a masked row. Writes the gradient
/// with respect to the logits when requested.
template <typename T>
T sem_loss(const Mat<T>& logits, const std::vector<int>& targets, Mat<T>* dlogits = nullptr);

template <typename T>
struct ContextState {
  Mat<T> contexts;  // row m is the context used to predict frame m
  typename Transformer<T>::KvCache kv;

  RowVec<T> last() const { return contexts.row(contexts.rows() - 1); }
};

template <typename T>
class FlowSlm {
 public:
  explicit FlowSlm(const ModelConfig& config);

  void initialize(std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }
  ParamSet<T> zero_grad() const { return ParamSet<T>(layout_); }
  const std::shared_ptr<const ParamLayout>& layout() const { return layout_; }

  /// Contexts for every position of a sequence. Position 0 sees only the
  /// begin-of-sequence state; position m sees inputs 0..m-1.
  ContextState<T> encode_context(const std::vector<int>& tokens, const MatF& frames) const;
  /// Teacher-forced contexts of a whole utterance in one batched pass; row m
  /// predicts frame m.
  Mat<T> context_matrix(const Utterance& utt) const;
  /// Consumes one more input frame and appends the next context.
  RowVec<T> advance(ContextState<T>& state, int token, const RowVec<T>& frame) const;

  /// k x vocab logits; row i scores the token i steps ahead.
  Mat<T> sem_logits(const RowVec<T>& context) const;

  /// Predicted vector field at (x_t, t) conditioned on the context and the
  /// k conditioning tokens (negative ids are ignored). With drop_condition
  /// both are replaced by the learned null embedding.
  Vec<T> cfm_head(const Vec<T>& xt, T t, const RowVec<T>& context, const std::vector<int>& tokens,
                  bool drop_condition) const;
  /// Batched form: one row per query; `drop` has one flag per row.
  Mat<T> cfm_head_batch(const Mat<T>& xt, const std::vector<T>& t, const Mat<T>& contexts,
                        const std::vector<std::vector<int>>& tokens,
                        const std::vector<char>& drop) const;

  LossBreakdown loss_forward(const std::vector<BatchItem>& batch) const;
  /// Loss plus exact gradient of `total`, accumulated into `grad`.
  LossBreakdown loss_and_grad(const std::vector<BatchItem>& batch, ParamSet<T>& grad) const;

  /// log P(z_m | c_{<m}) under head 0, teacher-forced, one entry per frame.
  std::vector<double> head0_logprobs(const Utterance& utt) const;

  /// Parameter ids of the k semantic heads (for tests touching heads >= 1).
  int sem_weight_id() const { return sem_w_; }
  int sem_bias_id() const { return sem_b_; }

 private:
  LossBreakdown compute(const std::vector<BatchItem>& batch, ParamSet<T>* grad) const;
  Mat<T> transformer_inputs(const std::vector<const Utterance*>& seqs,
                            std::vector<int>& offsets, Mat<T>* frames_out) const;
  RowVec<T> input_row(int position, int token, const RowVec<T>& frame, bool bos) const;
  void conditioning(const RowVec<T>& context, const std::vector<int>& tokens, bool drop,
                    Eigen::Ref<RowVec<T>> out) const;

  ModelConfig config_;
  std::shared_ptr<const ParamLayout> layout_;
  ParamSet<T> params_;
  Transformer<T> transformer_;
  CfmHead<T> cfm_;
  int tok_embed_ = -1, in_w_ = -1, in_b_ = -1, bos_ = -1, pos_ = -1;
  int sem_w_ = -1, sem_b_ = -1;
  int cfm_tok_ = -1, cfm_null_ = -1;
};

// Checkpoints. Layout (little-endian):
//   char[8] "FSLMCKPT", u32 version, str config_json, u64 step, str rng_state,
//   str meta_json, u32 tensor_count, then per tensor: str name, u32 rows,
//   u32 cols, f32[rows*cols]. Strings are u64 length + bytes.
// Tensor names are "param/<name>", "adam_m/<name>", "adam_v/<name>".
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  std::uint64_t step = 0;
  std::string rng_state;
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, MatF> tensors;
};

Checkpoint make_checkpoint(const FlowSlm<float>& model, std::uint64_t step);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);
/// Model with parameters restored from the "param/" tensors.
FlowSlm<float> model_from_checkpoint(const Checkpoint& ckpt);
/// Copies a ParamSet group ("param", "adam_m", ...) into / out of a checkpoint.
void store_group(Checkpoint& ckpt, const std::string& group, const ParamSet<float>& set);
void load_group(const Checkpoint& ckpt, const std::string& group, ParamSet<float>& set);

}  // namespace flowslm
