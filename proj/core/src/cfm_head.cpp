#include "flowslm/cfm_head.hpp"

namespace flowslm {

template <typename T>
CfmHead<T>::CfmHead(ParamLayout& layout, const CfmHeadShape& shape, const std::string& prefix)
    : shape_(shape) {
  const int h = shape.hidden;
  in_w_ = layout.add(prefix + "in.w", shape.input_dim(), h, Init::kNormal, true);
  in_b_ = layout.add(prefix + "in.b", 1, h, Init::kZero, false);
  for (int b = 0; b < shape.blocks; ++b) {
    const std::string p = prefix + "block" + std::to_string(b) + ".";
    BlockIds ids{};
    ids.ln_g = layout.add(p + "ln.g", 1, h, Init::kOne, false);
    ids.ln_b = layout.add(p + "ln.b", 1, h, Init::kZero, false);
    ids.fc1_w = layout.add(p + "fc1.w", h, h, Init::kNormal, true);
    ids.fc1_b = layout.add(p + "fc1.b", 1, h, Init::kZero, false);
    ids.fc2_w = layout.add(p + "fc2.w", h, h, Init::kNormal, true);
    ids.fc2_b = layout.add(p + "fc2.b", 1, h, Init::kZero, false);
    blocks_.push_back(ids);
  }
  out_ln_g_ = layout.add(prefix + "out_ln.g", 1, h, Init::kOne, false);
  out_ln_b_ = layout.add(prefix + "out_ln.b", 1, h, Init::kZero, false);
  // Zero-initialized so the initial field is identically 0.
  out_w_ = layout.add(prefix + "out.w", h, shape.embed_dim, Init::kZero, true);
  out_b_ = layout.add(prefix + "out.b", 1, shape.embed_dim, Init::kZero, false);
}

template <typename T>
Mat<T> CfmHead<T>::assemble(const Mat<T>& xt, const std::vector<T>& t, const Mat<T>& cond) const {
  const Eigen::Index n = xt.rows();
  FLOWSLM_REQUIRE(xt.cols() == shape_.embed_dim, "CfmHead: x_t dimension mismatch");
  FLOWSLM_REQUIRE(static_cast<Eigen::Index>(t.size()) == n, "CfmHead: one t per row required");
  FLOWSLM_REQUIRE(cond.cols() == shape_.cond_dim && (cond.rows() == n || shape_.cond_dim == 0),
                  "CfmHead: conditioning shape mismatch");
  Mat<T> u(n, shape_.input_dim());
  u.leftCols(shape_.embed_dim) = xt;
  for (Eigen::Index i = 0; i < n; ++i) {
    nn::time_embedding(t[i], shape_.time_embed_dim, &u(i, shape_.embed_dim));
  }
  if (shape_.cond_dim > 0) u.rightCols(shape_.cond_dim) = cond;
  return u;
}

template <typename T>
void CfmHead<T>::forward(const ParamSet<T>& p, const Mat<T>& input, Mat<T>& out,
                         Cache* cache) const {
  FLOWSLM_REQUIRE(input.cols() == shape_.input_dim(), "CfmHead: input width mismatch");
  Cache local;
  Cache& c = cache ? *cache : local;
  const Eigen::Index n = input.rows();
  c.input = input;
  c.h0.resize(n, shape_.hidden);
  nn::linear_forward<T>(input, p.tensor(in_w_), p.row(in_b_), c.h0);
  Mat<T> h = c.h0;
  c.blocks.resize(blocks_.size());
  Mat<T> delta(n, shape_.hidden);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const BlockIds& ids = blocks_[b];
    auto& bc = c.blocks[b];
    bc.h_in = h;
    nn::layernorm_forward(h, p.row(ids.ln_g), p.row(ids.ln_b), bc.a, bc.ln);
    bc.pre.resize(n, shape_.hidden);
    nn::linear_forward<T>(bc.a, p.tensor(ids.fc1_w), p.row(ids.fc1_b), bc.pre);
    nn::gelu_forward(bc.pre, bc.act);
    nn::linear_forward<T>(bc.act, p.tensor(ids.fc2_w), p.row(ids.fc2_b), delta);
    h += delta;
  }
  nn::layernorm_forward(h, p.row(out_ln_g_), p.row(out_ln_b_), c.out_a, c.out_ln);
  out.resize(n, shape_.embed_dim);
  nn::linear_forward<T>(c.out_a, p.tensor(out_w_), p.row(out_b_), out);
}

template <typename T>
void CfmHead<T>::backward(const ParamSet<T>& p, const Cache& c, const Mat<T>& dout, ParamSet<T>& g,
                          Mat<T>& dinput) const {
  Mat<T> da, dh;
  {
    auto dw = g.tensor(out_w_);
    auto db = g.row(out_b_);
    nn::linear_backward<T>(c.out_a, p.tensor(out_w_), dout, dw, db, &da);
    auto dg = g.row(out_ln_g_);
    auto dbn = g.row(out_ln_b_);
    nn::layernorm_backward(c.out_ln, p.row(out_ln_g_), da, dg, dbn, dh);
  }
  Mat<T> dact, dpre, tmp;
  for (int b = static_cast<int>(blocks_.size()) - 1; b >= 0; --b) {
    const BlockIds& ids = blocks_[b];
    const auto& bc = c.blocks[b];
    auto dw2 = g.tensor(ids.fc2_w);
    auto db2 = g.row(ids.fc2_b);
    nn::linear_backward<T>(bc.act, p.tensor(ids.fc2_w), dh, dw2, db2, &dact);
    nn::gelu_backward(bc.pre, dact, dpre);
    auto dw1 = g.tensor(ids.fc1_w);
    auto db1 = g.row(ids.fc1_b);
    nn::linear_backward<T>(bc.a, p.tensor(ids.fc1_w), dpre, dw1, db1, &da);
    auto dg = g.row(ids.ln_g);
    auto dbn = g.row(ids.ln_b);
    nn::layernorm_backward(bc.ln, p.row(ids.ln_g), da, dg, dbn, tmp);
    dh += tmp;
  }
  auto dw = g.tensor(in_w_);
  auto db = g.row(in_b_);
  nn::linear_backward<T>(c.input, p.tensor(in_w_), dh, dw, db, &dinput);
}

template class CfmHead<float>;
template class CfmHead<double>;

}  // namespace flowslm
