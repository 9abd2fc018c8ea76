#include "flowslm/model.hpp"

#include <cmath>
#include <sstream>

#include "flowslm/binary_io.hpp"
#include "flowslm/flow.hpp"
#include "flowslm/rng.hpp"

namespace flowslm {

std::string to_string(InputMode m) { return m == InputMode::kToken ? "token" : "vector"; }

InputMode input_mode_from_string(const std::string& s) {
  if (s == "token") return InputMode::kToken;
  if (s == "vector") return InputMode::kVector;
  throw ConfigError("unknown input mode '" + s + "' (expected token or vector)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0) {
    fail("d_model must be a positive multiple of n_heads");
  }
  if (n_layers < 1) fail("n_layers must be >= 1");
  if (k_future < 1) fail("k_future must be >= 1");
  if (vocab_size < 3) fail("vocab_size must exceed the reserved ids");
  if (embed_dim < 1) fail("embed_dim must be >= 1");
  if (cfm_enabled && (cfm_blocks < 0 || cfm_hidden < 1 || time_embed_dim < 2)) {
    fail("invalid CFM head shape");
  }
  if (!(cond_dropout_p >= 0.0 && cond_dropout_p <= 1.0)) fail("cond_dropout_p must be in [0,1]");
  if (!(sigma_min >= 0.0 && sigma_min < 1.0)) fail("sigma_min must be in [0,1)");
  if (max_positions < 2) fail("max_positions must be >= 2");
  if (!(init_std > 0.0)) fail("init_std must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"input_mode", to_string(input_mode)},
          {"d_model", d_model},
          {"n_layers", n_layers},
          {"n_heads", n_heads},
          {"k_future", k_future},
          {"cfm_enabled", cfm_enabled},
          {"cfm_blocks", cfm_blocks},
          {"cfm_hidden", cfm_hidden},
          {"vocab_size", vocab_size},
          {"embed_dim", embed_dim},
          {"time_embed_dim", time_embed_dim},
          {"cond_dropout_p", cond_dropout_p},
          {"sigma_min", sigma_min},
          {"max_positions", max_positions},
          {"init_std", init_std}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.input_mode = input_mode_from_string(j.at("input_mode").get<std::string>());
    c.d_model = j.at("d_model").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.k_future = j.at("k_future").get<int>();
    c.cfm_enabled = j.at("cfm_enabled").get<bool>();
    c.cfm_blocks = j.at("cfm_blocks").get<int>();
    c.cfm_hidden = j.at("cfm_hidden").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.time_embed_dim = j.at("time_embed_dim").get<int>();
    c.cond_dropout_p = j.at("cond_dropout_p").get<double>();
    c.sigma_min = j.at("sigma_min").get<double>();
    c.max_positions = j.at("max_positions").get<int>();
    c.init_std = j.at("init_std").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config json: ") + e.what());
  }
  c.validate();
  return c;
}

template <typename T>
T sem_loss(const Mat<T>& logits, const std::vector<int>& targets, Mat<T>* dlogits) {
  FLOWSLM_REQUIRE(static_cast<Eigen::Index>(targets.size()) == logits.rows(),
                  "sem_loss: one target per logit row required");
  const Eigen::Index v = logits.cols();
  int valid = 0;
  for (int z : targets) {
    FLOWSLM_REQUIRE(z < v, "sem_loss: target outside vocabulary");
    if (z >= 0) ++valid;
  }
  if (dlogits) dlogits->setZero(logits.rows(), v);
  if (valid == 0) return T(0);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (targets[i] < 0) continue;
    RowVec<T> p = logits.row(i);
    nn::softmax_inplace(p);
    const T m = logits.row(i).maxCoeff();
    const double lse = static_cast<double>(m) +
                       std::log(static_cast<double>((logits.row(i).array() - m).exp().sum()));
    loss += lse - static_cast<double>(logits(i, targets[i]));
    if (dlogits) {
      p[targets[i]] -= T(1);
      dlogits->row(i) = p / T(valid);
    }
  }
  return static_cast<T>(loss / valid);
}

template float sem_loss<float>(const MatF&, const std::vector<int>&, MatF*);
template double sem_loss<double>(const MatD&, const std::vector<int>&, MatD*);

template <typename T>
FlowSlm<T>::FlowSlm(const ModelConfig& config) : config_(config) {
  config_.validate();
  const int d = config_.d_model;
  auto layout = std::make_shared<ParamLayout>();
  if (config_.input_mode == InputMode::kToken) {
    tok_embed_ = layout->add("input.tok_embed", config_.vocab_size, d, Init::kNormal, true);
  } else {
    in_w_ = layout->add("input.proj.w", config_.embed_dim, d, Init::kNormal, true);
    in_b_ = layout->add("input.proj.b", 1, d, Init::kZero, false);
  }
  bos_ = layout->add("input.bos", 1, d, Init::kNormal, false);
  pos_ = layout->add("input.pos", config_.max_positions, d, Init::kNormal, false);
  transformer_ = Transformer<T>(*layout, {d, config_.n_layers, config_.n_heads, 4}, "tf.");
  sem_w_ = layout->add("sem.w", d, config_.k_future * config_.vocab_size, Init::kNormal, true);
  sem_b_ = layout->add("sem.b", 1, config_.k_future * config_.vocab_size, Init::kZero, false);
  if (config_.cfm_enabled) {
    cfm_tok_ = layout->add("cfm.tok_embed", config_.vocab_size, d, Init::kNormal, true);
    cfm_null_ = layout->add("cfm.null", 1, 2 * d, Init::kNormal, false);
    CfmHeadShape shape;
    shape.embed_dim = config_.embed_dim;
    shape.time_embed_dim = config_.time_embed_dim;
    shape.cond_dim = 2 * d;
    shape.hidden = config_.cfm_hidden;
    shape.blocks = config_.cfm_blocks;
    cfm_ = CfmHead<T>(*layout, shape, "cfm.");
  }
  layout_ = layout;
  params_ = ParamSet<T>(layout_);
}

template <typename T>
void FlowSlm<T>::initialize(std::uint64_t seed) {
  Rng rng = Rng::derive(seed, "init");
  params_.initialize(rng, config_.init_std);
}

template <typename T>
RowVec<T> FlowSlm<T>::input_row(int position, int token, const RowVec<T>& frame, bool bos) const {
  FLOWSLM_REQUIRE(position < config_.max_positions,
                  "sequence longer than max_positions (" + std::to_string(config_.max_positions) + ")");
  RowVec<T> r;
  if (bos) {
    r = params_.row(bos_);
  } else if (config_.input_mode == InputMode::kToken) {
    FLOWSLM_REQUIRE(token >= 0 && token < config_.vocab_size, "input token outside vocabulary");
    r = params_.tensor(tok_embed_).row(token);
  } else {
    FLOWSLM_REQUIRE(frame.size() == config_.embed_dim, "input frame dimension mismatch");
    r = frame * params_.tensor(in_w_) + params_.row(in_b_);
  }
  r += params_.tensor(pos_).row(position);
  return r;
}

template <typename T>
Mat<T> FlowSlm<T>::transformer_inputs(const std::vector<const Utterance*>& seqs,
                                      std::vector<int>& offsets, Mat<T>* frames_out) const {
  const int d = config_.d_model;
  offsets.assign(1, 0);
  for (const Utterance* u : seqs) {
    FLOWSLM_REQUIRE(u != nullptr && u->length() >= 1, "empty utterance in batch");
    FLOWSLM_REQUIRE(u->embeddings.rows() == u->length(), "utterance tokens/frames length mismatch");
    FLOWSLM_REQUIRE(u->embeddings.cols() == config_.embed_dim, "utterance frame dimension mismatch");
    FLOWSLM_REQUIRE(u->length() <= config_.max_positions,
                    "utterance longer than max_positions (" + std::to_string(config_.max_positions) + ")");
    offsets.push_back(offsets.back() + u->length());
  }
  const int n = offsets.back();
  Mat<T> x(n, d);
  Mat<T> frames = Mat<T>::Zero(n, config_.embed_dim);  // row r holds the input frame of row r
  const auto pos = params_.tensor(pos_);
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    const Utterance& u = *seqs[s];
    const int o = offsets[s];
    for (int j = 1; j < u.length(); ++j) {
      frames.row(o + j) = u.embeddings.row(j - 1).template cast<T>();
    }
  }
  if (config_.input_mode == InputMode::kVector) {
    nn::linear_forward<T>(frames, params_.tensor(in_w_), params_.row(in_b_), x);
  } else {
    const auto emb = params_.tensor(tok_embed_);
    for (std::size_t s = 0; s < seqs.size(); ++s) {
      const Utterance& u = *seqs[s];
      for (int j = 1; j < u.length(); ++j) {
        const int z = u.tokens[j - 1];
        FLOWSLM_REQUIRE(z >= 0 && z < config_.vocab_size, "input token outside vocabulary");
        x.row(offsets[s] + j) = emb.row(z);
      }
    }
  }
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    const int o = offsets[s];
    x.row(o) = params_.row(bos_);
    const int m = offsets[s + 1] - o;
    x.middleRows(o, m) += pos.topRows(m);
  }
  if (frames_out) *frames_out = std::move(frames);
  return x;
}

template <typename T>
ContextState<T> FlowSlm<T>::encode_context(const std::vector<int>& tokens, const MatF& frames) const {
  const bool token_mode = config_.input_mode == InputMode::kToken;
  const Eigen::Index m = token_mode ? static_cast<Eigen::Index>(tokens.size()) : frames.rows();
  FLOWSLM_REQUIRE(m >= 1, "encode_context: empty input");
  if (token_mode && frames.rows() > 0) {
    FLOWSLM_REQUIRE(frames.rows() == m, "encode_context: tokens/frames length mismatch");
  }
  if (!token_mode && !tokens.empty()) {
    FLOWSLM_REQUIRE(static_cast<Eigen::Index>(tokens.size()) == m,
                    "encode_context: tokens/frames length mismatch");
  }
  ContextState<T> st;
  st.kv = transformer_.empty_cache();
  st.contexts.resize(0, config_.d_model);
  const RowVec<T> none;
  st.contexts.conservativeResize(1, Eigen::NoChange);
  st.contexts.row(0) = transformer_.step(params_, input_row(0, -1, none, true), st.kv);
  for (Eigen::Index j = 0; j < m; ++j) {
    advance(st, token_mode ? tokens[j] : -1,
            token_mode ? none : RowVec<T>(frames.row(j).template cast<T>()));
  }
  return st;
}

template <typename T>
RowVec<T> FlowSlm<T>::advance(ContextState<T>& state, int token, const RowVec<T>& frame) const {
  const int position = state.kv.length;
  FLOWSLM_REQUIRE(position >= 1, "advance: state was not produced by encode_context");
  RowVec<T> c = transformer_.step(params_, input_row(position, token, frame, false), state.kv);
  state.contexts.conservativeResize(state.contexts.rows() + 1, Eigen::NoChange);
  state.contexts.row(state.contexts.rows() - 1) = c;
  return c;
}

template <typename T>
Mat<T> FlowSlm<T>::sem_logits(const RowVec<T>& context) const {
  FLOWSLM_REQUIRE(context.size() == config_.d_model, "sem_logits: context dimension mismatch");
  RowVec<T> flat = context * params_.tensor(sem_w_) + params_.row(sem_b_);
  return Eigen::Map<const Mat<T>>(flat.data(), config_.k_future, config_.vocab_size);
}

template <typename T>
void FlowSlm<T>::conditioning(const RowVec<T>& context, const std::vector<int>& tokens, bool drop,
                              Eigen::Ref<RowVec<T>> out) const {
  const int d = config_.d_model;
  if (drop) {
    out = params_.row(cfm_null_);
    return;
  }
  out.head(d) = context;
  auto mean = out.tail(d);
  mean.setZero();
  int count = 0;
  const auto emb = params_.tensor(cfm_tok_);
  for (int z : tokens) {
    if (z < 0) continue;
    FLOWSLM_REQUIRE(z < config_.vocab_size, "conditioning token outside vocabulary");
    mean += emb.row(z);
    ++count;
  }
  if (count > 0) mean /= T(count);
}

template <typename T>
Mat<T> FlowSlm<T>::cfm_head_batch(const Mat<T>& xt, const std::vector<T>& t, const Mat<T>& contexts,
                                  const std::vector<std::vector<int>>& tokens,
                                  const std::vector<char>& drop) const {
  FLOWSLM_REQUIRE(config_.cfm_enabled, "cfm_head: model has no CFM head");
  const Eigen::Index n = xt.rows();
  FLOWSLM_REQUIRE(contexts.rows() == n && contexts.cols() == config_.d_model,
                  "cfm_head: context shape mismatch");
  FLOWSLM_REQUIRE(static_cast<Eigen::Index>(tokens.size()) == n &&
                      static_cast<Eigen::Index>(drop.size()) == n,
                  "cfm_head: one token list and drop flag per row required");
  Mat<T> cond(n, 2 * config_.d_model);
  for (Eigen::Index i = 0; i < n; ++i) {
    conditioning(contexts.row(i), tokens[i], drop[i] != 0, cond.row(i));
  }
  Mat<T> out;
  cfm_.forward(params_, cfm_.assemble(xt, t, cond), out, nullptr);
  return out;
}

template <typename T>
Vec<T> FlowSlm<T>::cfm_head(const Vec<T>& xt, T t, const RowVec<T>& context,
                            const std::vector<int>& tokens, bool drop_condition) const {
  FLOWSLM_REQUIRE(xt.size() == config_.embed_dim, "cfm_head: x_t dimension mismatch");
  Mat<T> out = cfm_head_batch(Mat<T>(xt.transpose()), {t}, Mat<T>(context), {tokens},
                              {static_cast<char>(drop_condition)});
  return out.row(0).transpose();
}

template <typename T>
LossBreakdown FlowSlm<T>::loss_forward(const std::vector<BatchItem>& batch) const {
  return compute(batch, nullptr);
}

template <typename T>
LossBreakdown FlowSlm<T>::loss_and_grad(const std::vector<BatchItem>& batch, ParamSet<T>& grad) const {
  FLOWSLM_REQUIRE(grad.flat().size() == params_.flat().size(), "gradient buffer layout mismatch");
  return compute(batch, &grad);
}

template <typename T>
LossBreakdown FlowSlm<T>::compute(const std::vector<BatchItem>& batch, ParamSet<T>* grad) const {
  FLOWSLM_REQUIRE(!batch.empty(), "loss: empty batch");
  const int d = config_.d_model;
  const int k = config_.k_future;
  const int vsz = config_.vocab_size;
  const int e = config_.embed_dim;

  std::vector<const Utterance*> seqs;
  seqs.reserve(batch.size());
  for (const auto& b : batch) seqs.push_back(b.utterance);
  std::vector<int> offsets;
  Mat<T> frames;
  const Mat<T> x = transformer_inputs(seqs, offsets, &frames);
  const int n = offsets.back();

  typename Transformer<T>::Cache tcache;
  Mat<T> ctx;
  transformer_.forward(params_, x, offsets, ctx, grad ? &tcache : nullptr);

  auto where = [&](std::size_t s, int j) {
    return "batch item " + std::to_string(s) + ", position " + std::to_string(j);
  };

  // Semantic heads: row r of item s predicts tokens r, r+1, ..., r+k-1.
  Mat<T> logits(n, k * vsz);
  nn::linear_forward<T>(ctx, params_.tensor(sem_w_), params_.row(sem_b_), logits);
  std::vector<int> head_count(k, 0);
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    const int m = seqs[s]->length();
    for (int i = 0; i < k; ++i) head_count[i] += std::max(0, m - i);
  }
  int active_heads = 0;
  for (int c : head_count) active_heads += c > 0 ? 1 : 0;
  Mat<T> dlogits;
  if (grad) dlogits.setZero(n, k * vsz);
  std::vector<double> head_nll(k, 0.0);
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    const Utterance& u = *seqs[s];
    const int o = offsets[s];
    for (int j = 0; j < u.length(); ++j) {
      for (int i = 0; i < k && j + i < u.length(); ++i) {
        const int z = u.tokens[j + i];
        FLOWSLM_REQUIRE(z >= 0 && z < vsz, "target token outside vocabulary at " + where(s, j));
        auto row = logits.row(o + j).segment(i * vsz, vsz);
        const T mx = row.maxCoeff();
        const double sum = static_cast<double>((row.array() - mx).exp().sum());
        const double nll = static_cast<double>(mx) + std::log(sum) - static_cast<double>(row[z]);
        if (!std::isfinite(nll)) {
          throw NumericalError("non-finite semantic loss at " + where(s, j) + ", head " +
                               std::to_string(i));
        }
        head_nll[i] += nll;
        if (grad) {
          const T w = T(1) / T(static_cast<double>(active_heads) * head_count[i]);
          auto drow = dlogits.row(o + j).segment(i * vsz, vsz);
          drow = (row.array() - mx).exp().matrix() * static_cast<T>(1.0 / sum);
          drow[z] -= T(1);
          drow *= w;
        }
      }
    }
  }
  LossBreakdown out;
  for (int i = 0; i < k; ++i) {
    if (head_count[i] > 0) out.sem_loss += head_nll[i] / head_count[i];
  }
  out.sem_loss /= active_heads;

  // Flow-matching head: row r of item s regresses frame r.
  Mat<T> dctx;
  if (grad) dctx.setZero(n, d);
  if (config_.cfm_enabled) {
    const T smin = static_cast<T>(config_.sigma_min);
    Mat<T> xt(n, e), target(n, e), cond(n, 2 * d);
    std::vector<T> ts(n);
    std::vector<char> drops(n, 0);
    for (std::size_t s = 0; s < seqs.size(); ++s) {
      const Utterance& u = *seqs[s];
      const int o = offsets[s];
      Rng rng(batch[s].noise_seed);
      std::vector<int> toks(k);
      for (int j = 0; j < u.length(); ++j) {
        const int r = o + j;
        ts[r] = static_cast<T>(rng.uniform());
        Vec<T> x0(e);
        for (int c = 0; c < e; ++c) x0[c] = static_cast<T>(rng.normal());
        drops[r] = rng.bernoulli(config_.cond_dropout_p) ? 1 : 0;
        const Vec<T> x1 = u.embeddings.row(j).transpose().template cast<T>();
        xt.row(r) = ot_flow<T>(ts[r], x0, x1, smin).transpose();
        target.row(r) = ot_target_field<T>(x0, x1, smin).transpose();
        for (int i = 0; i < k; ++i) toks[i] = j + i < u.length() ? u.tokens[j + i] : -1;
        conditioning(ctx.row(r), toks, drops[r] != 0, cond.row(r));
      }
    }
    typename CfmHead<T>::Cache hcache;
    Mat<T> v;
    const Mat<T> input = cfm_.assemble(xt, ts, cond);
    cfm_.forward(params_, input, v, grad ? &hcache : nullptr);
    const Mat<T> diff = v - target;
    double total = 0.0;
    for (std::size_t s = 0; s < seqs.size(); ++s) {
      for (int j = 0; j < seqs[s]->length(); ++j) {
        const double l = static_cast<double>(diff.row(offsets[s] + j).squaredNorm());
        if (!std::isfinite(l)) throw NumericalError("non-finite CFM loss at " + where(s, j));
        total += l;
      }
    }
    out.cfm_loss = total / n;
    if (grad) {
      const Mat<T> dv = diff * static_cast<T>(2.0 / n);
      Mat<T> dinput;
      cfm_.backward(params_, hcache, dv, *grad, dinput);
      const Eigen::Index cond_col = e + config_.time_embed_dim;
      auto dnull = grad->row(cfm_null_);
      auto dtok = grad->tensor(cfm_tok_);
      for (std::size_t s = 0; s < seqs.size(); ++s) {
        const Utterance& u = *seqs[s];
        for (int j = 0; j < u.length(); ++j) {
          const int r = offsets[s] + j;
          const auto dc = dinput.row(r).segment(cond_col, 2 * d);
          if (drops[r]) {
            dnull += dc;
            continue;
          }
          dctx.row(r) += dc.head(d);
          const int count = std::min(k, u.length() - j);
          for (int i = 0; i < count; ++i) {
            dtok.row(u.tokens[j + i]) += dc.tail(d) / T(count);
          }
        }
      }
    }
  }
  out.total = out.sem_loss + out.cfm_loss;
  if (!std::isfinite(out.total)) throw NumericalError("non-finite total loss");
  if (!grad) return out;

  {
    auto dw = grad->tensor(sem_w_);
    auto db = grad->row(sem_b_);
    Mat<T> dc;
    nn::linear_backward<T>(ctx, params_.tensor(sem_w_), dlogits, dw, db, &dc);
    dctx += dc;
  }
  Mat<T> dx;
  transformer_.backward(params_, tcache, dctx, *grad, dx);
  auto dpos = grad->tensor(pos_);
  auto dbos = grad->row(bos_);
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    const int o = offsets[s];
    const int m = offsets[s + 1] - o;
    dpos.topRows(m) += dx.middleRows(o, m);
    dbos += dx.row(o);
    dx.row(o).setZero();  // the begin-of-sequence row has no input frame
  }
  if (config_.input_mode == InputMode::kVector) {
    auto dw = grad->tensor(in_w_);
    auto db = grad->row(in_b_);
    nn::linear_backward<T>(frames, params_.tensor(in_w_), dx, dw, db, nullptr);
  } else {
    auto demb = grad->tensor(tok_embed_);
    for (std::size_t s = 0; s < seqs.size(); ++s) {
      const Utterance& u = *seqs[s];
      for (int j = 1; j < u.length(); ++j) demb.row(u.tokens[j - 1]) += dx.row(offsets[s] + j);
    }
  }
  for (Eigen::Index i = 0; i < grad->flat().size(); ++i) {
    if (!std::isfinite(static_cast<double>(grad->flat()[i]))) {
      throw NumericalError("non-finite gradient in parameter buffer at index " + std::to_string(i));
    }
  }
  return out;
}

template <typename T>
Mat<T> FlowSlm<T>::context_matrix(const Utterance& utt) const {
  std::vector<int> offsets;
  const Mat<T> x = transformer_inputs({&utt}, offsets, nullptr);
  Mat<T> ctx;
  transformer_.forward(params_, x, offsets, ctx, nullptr);
  return ctx;
}

template <typename T>
std::vector<double> FlowSlm<T>::head0_logprobs(const Utterance& utt) const {
  const Mat<T> ctx = context_matrix(utt);
  const int vsz = config_.vocab_size;
  // Only the first vocab_size columns (head 0) are needed.
  Mat<T> logits(ctx.rows(), vsz);
  nn::linear_forward<T>(ctx, params_.tensor(sem_w_).leftCols(vsz), params_.row(sem_b_).head(vsz),
                        logits);
  std::vector<double> lp(utt.length());
  for (int j = 0; j < utt.length(); ++j) {
    const int z = utt.tokens[j];
    FLOWSLM_REQUIRE(z >= 0 && z < vsz, "token outside vocabulary");
    const auto row = logits.row(j);
    const T mx = row.maxCoeff();
    const double lse = static_cast<double>(mx) +
                       std::log(static_cast<double>((row.array() - mx).exp().sum()));
    lp[j] = static_cast<double>(row[z]) - lse;
  }
  return lp;
}

template class FlowSlm<float>;
template class FlowSlm<double>;

// ---- checkpoints ----

void store_group(Checkpoint& ckpt, const std::string& group, const ParamSet<float>& set) {
  const ParamLayout& layout = set.layout();
  for (int id = 0; id < static_cast<int>(layout.specs().size()); ++id) {
    ckpt.tensors[group + "/" + layout.spec(id).name] = set.tensor(id);
  }
}

void load_group(const Checkpoint& ckpt, const std::string& group, ParamSet<float>& set) {
  const ParamLayout& layout = set.layout();
  for (int id = 0; id < static_cast<int>(layout.specs().size()); ++id) {
    const TensorSpec& spec = layout.spec(id);
    const std::string name = group + "/" + spec.name;
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw IoError("checkpoint is missing tensor " + name);
    if (it->second.rows() != spec.rows || it->second.cols() != spec.cols) {
      throw IoError("checkpoint tensor " + name + " has the wrong shape");
    }
    set.tensor(id) = it->second;
  }
}

Checkpoint make_checkpoint(const FlowSlm<float>& model, std::uint64_t step) {
  Checkpoint c;
  c.config = model.config();
  c.step = step;
  store_group(c, "param", model.params());
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  BinaryWriter w(path);
  w.bytes("FSLMCKPT", 8);
  w.u32(kCheckpointVersion);
  w.str(ckpt.config.to_json().dump());
  w.u64(ckpt.step);
  w.str(ckpt.rng_state);
  w.str(ckpt.meta.dump());
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, m] : ckpt.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    w.f32s(m.data(), static_cast<std::size_t>(m.size()));
  }
  w.close();
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  BinaryReader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::string(magic, 8) != "FSLMCKPT") throw IoError(path.string() + " is not a checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint " + path.string() + " has format version " + std::to_string(version) +
                  ", expected " + std::to_string(kCheckpointVersion));
  }
  Checkpoint c;
  try {
    c.config = ModelConfig::from_json(nlohmann::json::parse(r.str()));
    c.step = r.u64();
    c.rng_state = r.str();
    c.meta = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(4096);
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (static_cast<std::uint64_t>(rows) * cols > (1ULL << 30)) {
      throw IoError("implausible tensor shape in " + path.string());
    }
    MatF m(rows, cols);
    r.f32s(m.data(), static_cast<std::size_t>(m.size()));
    c.tensors.emplace(std::move(name), std::move(m));
  }
  r.expect_eof();
  return c;
}

FlowSlm<float> model_from_checkpoint(const Checkpoint& ckpt) {
  FlowSlm<float> model(ckpt.config);
  load_group(ckpt, "param", model.params());
  return model;
}

}  // namespace flowslm
