#include "flowslm/transformer.hpp"

#include <cmath>
#include <limits>

namespace flowslm {

template <typename T>
Transformer<T>::Transformer(ParamLayout& layout, const TransformerShape& shape,
                            const std::string& prefix)
    : shape_(shape) {
  const int d = shape.d_model;
  const int h = shape.mlp_ratio * d;
  for (int l = 0; l < shape.n_layers; ++l) {
    const std::string p = prefix + "layer" + std::to_string(l) + ".";
    LayerIds ids{};
    ids.ln1_g = layout.add(p + "ln1.g", 1, d, Init::kOne, false);
    ids.ln1_b = layout.add(p + "ln1.b", 1, d, Init::kZero, false);
    ids.qkv_w = layout.add(p + "attn.qkv.w", d, 3 * d, Init::kNormal, true);
    ids.qkv_b = layout.add(p + "attn.qkv.b", 1, 3 * d, Init::kZero, false);
    ids.out_w = layout.add(p + "attn.out.w", d, d, Init::kNormal, true);
    ids.out_b = layout.add(p + "attn.out.b", 1, d, Init::kZero, false);
    ids.ln2_g = layout.add(p + "ln2.g", 1, d, Init::kOne, false);
    ids.ln2_b = layout.add(p + "ln2.b", 1, d, Init::kZero, false);
    ids.fc_w = layout.add(p + "mlp.fc.w", d, h, Init::kNormal, true);
    ids.fc_b = layout.add(p + "mlp.fc.b", 1, h, Init::kZero, false);
    ids.proj_w = layout.add(p + "mlp.proj.w", h, d, Init::kNormal, true);
    ids.proj_b = layout.add(p + "mlp.proj.b", 1, d, Init::kZero, false);
    layers_.push_back(ids);
  }
  lnf_g_ = layout.add(prefix + "lnf.g", 1, d, Init::kOne, false);
  lnf_b_ = layout.add(prefix + "lnf.b", 1, d, Init::kZero, false);
}

namespace {

// Causal attention for one (sequence, head) block.
template <typename T, typename Q, typename K, typename V, typename O>
void attend(const Q& q, const K& k, const V& v, O&& out, Mat<T>& probs) {
  const Eigen::Index m = q.rows();
  const T scale = T(1) / std::sqrt(static_cast<T>(q.cols()));
  probs.noalias() = (q * k.transpose()) * scale;
  for (Eigen::Index i = 0; i < m; ++i) {
    auto row = probs.row(i);
    row.tail(m - i - 1).setConstant(-std::numeric_limits<T>::infinity());
    nn::softmax_inplace(row);
  }
  out.noalias() = probs * v;
}

}  // namespace

template <typename T>
void Transformer<T>::forward(const ParamSet<T>& p, const Mat<T>& x, const std::vector<int>& offsets,
                             Mat<T>& out, Cache* cache) const {
  const int d = shape_.d_model;
  const int heads = shape_.n_heads;
  const int dh = d / heads;
  const Eigen::Index n = x.rows();
  FLOWSLM_REQUIRE(offsets.size() >= 2 && offsets.front() == 0 && offsets.back() == n,
                  "Transformer::forward: offsets do not cover input rows");
  Cache local;
  Cache& c = cache ? *cache : local;
  c.offsets = offsets;
  c.layers.resize(layers_.size());
  Mat<T> h = x;
  const int n_seq = static_cast<int>(offsets.size()) - 1;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LayerIds& ids = layers_[l];
    LayerCache& lc = c.layers[l];
    lc.x_in = h;
    nn::layernorm_forward(h, p.row(ids.ln1_g), p.row(ids.ln1_b), lc.a1, lc.ln1);
    lc.qkv.resize(n, 3 * d);
    nn::linear_forward<T>(lc.a1, p.tensor(ids.qkv_w), p.row(ids.qkv_b), lc.qkv);
    lc.att.resize(n, d);
    lc.probs.resize(static_cast<std::size_t>(n_seq) * heads);
    for (int s = 0; s < n_seq; ++s) {
      const int o = offsets[s];
      const int m = offsets[s + 1] - o;
      for (int hd = 0; hd < heads; ++hd) {
        attend<T>(lc.qkv.block(o, hd * dh, m, dh), lc.qkv.block(o, d + hd * dh, m, dh),
                  lc.qkv.block(o, 2 * d + hd * dh, m, dh), lc.att.block(o, hd * dh, m, dh),
                  lc.probs[static_cast<std::size_t>(s) * heads + hd]);
      }
    }
    Mat<T> proj(n, d);
    nn::linear_forward<T>(lc.att, p.tensor(ids.out_w), p.row(ids.out_b), proj);
    h += proj;
    lc.x_mid = h;
    nn::layernorm_forward(h, p.row(ids.ln2_g), p.row(ids.ln2_b), lc.a2, lc.ln2);
    lc.fc_pre.resize(n, shape_.mlp_ratio * d);
    nn::linear_forward<T>(lc.a2, p.tensor(ids.fc_w), p.row(ids.fc_b), lc.fc_pre);
    nn::gelu_forward(lc.fc_pre, lc.fc_act);
    nn::linear_forward<T>(lc.fc_act, p.tensor(ids.proj_w), p.row(ids.proj_b), proj);
    h += proj;
  }
  nn::layernorm_forward(h, p.row(lnf_g_), p.row(lnf_b_), out, c.lnf);
}

template <typename T>
void Transformer<T>::backward(const ParamSet<T>& p, const Cache& c, const Mat<T>& dout,
                              ParamSet<T>& g, Mat<T>& dx) const {
  const int d = shape_.d_model;
  const int heads = shape_.n_heads;
  const int dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const Eigen::Index n = dout.rows();
  const int n_seq = static_cast<int>(c.offsets.size()) - 1;

  Mat<T> dh_res;
  {
    auto dg = g.row(lnf_g_);
    auto db = g.row(lnf_b_);
    nn::layernorm_backward(c.lnf, p.row(lnf_g_), dout, dg, db, dh_res);
  }
  Mat<T> tmp, da;
  for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
    const LayerIds& ids = layers_[l];
    const LayerCache& lc = c.layers[l];
    // MLP branch.
    {
      auto dw = g.tensor(ids.proj_w);
      auto db = g.row(ids.proj_b);
      Mat<T> dact;
      nn::linear_backward<T>(lc.fc_act, p.tensor(ids.proj_w), dh_res, dw, db, &dact);
      Mat<T> dpre;
      nn::gelu_backward(lc.fc_pre, dact, dpre);
      auto dw1 = g.tensor(ids.fc_w);
      auto db1 = g.row(ids.fc_b);
      nn::linear_backward<T>(lc.a2, p.tensor(ids.fc_w), dpre, dw1, db1, &da);
      auto dg = g.row(ids.ln2_g);
      auto dbn = g.row(ids.ln2_b);
      nn::layernorm_backward(lc.ln2, p.row(ids.ln2_g), da, dg, dbn, tmp);
      dh_res += tmp;
    }
    // Attention branch.
    {
      Mat<T> datt;
      auto dw = g.tensor(ids.out_w);
      auto db = g.row(ids.out_b);
      nn::linear_backward<T>(lc.att, p.tensor(ids.out_w), dh_res, dw, db, &datt);
      Mat<T> dqkv = Mat<T>::Zero(n, 3 * d);
      for (int s = 0; s < n_seq; ++s) {
        const int o = c.offsets[s];
        const int m = c.offsets[s + 1] - o;
        for (int hd = 0; hd < heads; ++hd) {
          const Mat<T>& pr = lc.probs[static_cast<std::size_t>(s) * heads + hd];
          const auto q = lc.qkv.block(o, hd * dh, m, dh);
          const auto k = lc.qkv.block(o, d + hd * dh, m, dh);
          const auto v = lc.qkv.block(o, 2 * d + hd * dh, m, dh);
          const auto dout_blk = datt.block(o, hd * dh, m, dh);
          Mat<T> dp = dout_blk * v.transpose();
          dqkv.block(o, 2 * d + hd * dh, m, dh).noalias() = pr.transpose() * dout_blk;
          // Softmax backward: ds = p * (dp - rowsum(dp * p)).
          const Vec<T> inner = (dp.array() * pr.array()).rowwise().sum();
          Mat<T> ds = (pr.array() * (dp.array().colwise() - inner.array())).matrix() * scale;
          dqkv.block(o, hd * dh, m, dh).noalias() = ds * k;
          dqkv.block(o, d + hd * dh, m, dh).noalias() = ds.transpose() * q;
        }
      }
      auto dwq = g.tensor(ids.qkv_w);
      auto dbq = g.row(ids.qkv_b);
      nn::linear_backward<T>(lc.a1, p.tensor(ids.qkv_w), dqkv, dwq, dbq, &da);
      auto dg = g.row(ids.ln1_g);
      auto dbn = g.row(ids.ln1_b);
      nn::layernorm_backward(lc.ln1, p.row(ids.ln1_g), da, dg, dbn, tmp);
      dh_res += tmp;
    }
  }
  dx = std::move(dh_res);
}

template <typename T>
typename Transformer<T>::KvCache Transformer<T>::empty_cache() const {
  KvCache kv;
  kv.keys.assign(layers_.size(), Mat<T>(0, shape_.d_model));
  kv.values.assign(layers_.size(), Mat<T>(0, shape_.d_model));
  return kv;
}

template <typename T>
RowVec<T> Transformer<T>::step(const ParamSet<T>& p, const RowVec<T>& x, KvCache& kv) const {
  const int d = shape_.d_model;
  const int heads = shape_.n_heads;
  const int dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  Mat<T> h = x;
  Mat<T> a, qkv(1, 3 * d), proj(1, d), fc(1, shape_.mlp_ratio * d), act;
  nn::LayerNormCache<T> ln;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LayerIds& ids = layers_[l];
    nn::layernorm_forward(h, p.row(ids.ln1_g), p.row(ids.ln1_b), a, ln);
    nn::linear_forward<T>(a, p.tensor(ids.qkv_w), p.row(ids.qkv_b), qkv);
    Mat<T>& keys = kv.keys[l];
    Mat<T>& values = kv.values[l];
    keys.conservativeResize(kv.length + 1, d);
    values.conservativeResize(kv.length + 1, d);
    keys.row(kv.length) = qkv.block(0, d, 1, d);
    values.row(kv.length) = qkv.block(0, 2 * d, 1, d);
    Mat<T> att(1, d);
    for (int hd = 0; hd < heads; ++hd) {
      RowVec<T> scores = (qkv.block(0, hd * dh, 1, dh) *
                          keys.block(0, hd * dh, kv.length + 1, dh).transpose()) *
                         scale;
      nn::softmax_inplace(scores);
      att.block(0, hd * dh, 1, dh).noalias() = scores * values.block(0, hd * dh, kv.length + 1, dh);
    }
    nn::linear_forward<T>(att, p.tensor(ids.out_w), p.row(ids.out_b), proj);
    h += proj;
    nn::layernorm_forward(h, p.row(ids.ln2_g), p.row(ids.ln2_b), a, ln);
    nn::linear_forward<T>(a, p.tensor(ids.fc_w), p.row(ids.fc_b), fc);
    nn::gelu_forward(fc, act);
    nn::linear_forward<T>(act, p.tensor(ids.proj_w), p.row(ids.proj_b), proj);
    h += proj;
  }
  ++kv.length;
  Mat<T> out;
  nn::layernorm_forward(h, p.row(lnf_g_), p.row(lnf_b_), out, ln);
  return out.row(0);
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace flowslm
