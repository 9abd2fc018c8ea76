#pragma once

// Residual-MLP vector-field network v(x_t, t, cond).

#include <string>
#include <vector>

#include "flowslm/common.hpp"
#include "flowslm/nn.hpp"
#include "flowslm/params.hpp"

namespace flowslm {

struct CfmHeadShape {
  int embed_dim = 32;
  int time_embed_dim = 16;
  int cond_dim = 0;
  int hidden = 256;
  int blocks = 3;

  int input_dim() const { return embed_dim + time_embed_dim + cond_dim; }
};

template <typename T>
class CfmHead {
 public:
  CfmHead() = default;
  CfmHead(ParamLayout& layout, const CfmHeadShape& shape, const std::string& prefix);

  struct Cache {
    Mat<T> input;
    Mat<T> h0;
    struct Block {
      Mat<T> h_in;
      nn::LayerNormCache<T> ln;
      Mat<T> a, pre, act;
    };
    std::vector<Block> blocks;
    nn::LayerNormCache<T> out_ln;
    Mat<T> out_a;
  };

  /// Packs [x_t | time embedding | cond] rows. `cond` may have zero columns.
  Mat<T> assemble(const Mat<T>& xt, const std::vector<T>& t, const Mat<T>& cond) const;

  void forward(const ParamSet<T>& p, const Mat<T>& input, Mat<T>& out, Cache* cache) const;
  /// Accumulates parameter gradients; writes d(input).
  void backward(const ParamSet<T>& p, const Cache& cache, const Mat<T>& dout, ParamSet<T>& g,
                Mat<T>& dinput) const;

  const CfmHeadShape& shape() const { return shape_; }

 private:
  struct BlockIds {
    int ln_g, ln_b, fc1_w, fc1_b, fc2_w, fc2_b;
  };
  CfmHeadShape shape_;
  int in_w_ = -1, in_b_ = -1;
  std::vector<BlockIds> blocks_;
  int out_ln_g_ = -1, out_ln_b_ = -1, out_w_ = -1, out_b_ = -1;
};

}  // namespace flowslm
