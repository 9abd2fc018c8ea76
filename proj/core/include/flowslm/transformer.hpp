#pragma once

// Pre-LayerNorm causal transformer over packed variable-length sequences.

#include <string>
#include <vector>

#include "flowslm/common.hpp"
#include "flowslm/nn.hpp"
#include "flowslm/params.hpp"

namespace flowslm {

struct TransformerShape {
  int d_model = 128;
  int n_layers = 4;
  int n_heads = 4;
  int mlp_ratio = 4;
};

template <typename T>
class Transformer {
 public:
  Transformer() = default;
  Transformer(ParamLayout& layout, const TransformerShape& shape, const std::string& prefix);

  struct LayerCache {
    Mat<T> x_in;
    nn::LayerNormCache<T> ln1;
    Mat<T> a1, qkv, att;
    std::vector<Mat<T>> probs;  // one per (sequence, head)
    Mat<T> x_mid;
    nn::LayerNormCache<T> ln2;
    Mat<T> a2, fc_pre, fc_act;
  };
  struct Cache {
    std::vector<int> offsets;
    std::vector<LayerCache> layers;
    nn::LayerNormCache<T> lnf;
  };

  /// Runs all layers over `x` (rows packed per `offsets`, which has one more
  /// entry than there are sequences). Attention never crosses a sequence
  /// boundary and row i of a sequence sees only rows <= i.
  void forward(const ParamSet<T>& p, const Mat<T>& x, const std::vector<int>& offsets,
               Mat<T>& out, Cache* cache) const;
  void backward(const ParamSet<T>& p, const Cache& cache, const Mat<T>& dout, ParamSet<T>& grads,
                Mat<T>& dx) const;

  /// Key/value rows of every layer for incremental decoding.
  struct KvCache {
    std::vector<Mat<T>> keys, values;
    int length = 0;
  };
  KvCache empty_cache() const;
  /// Processes one new input row appended after the cached rows.
  RowVec<T> step(const ParamSet<T>& p, const RowVec<T>& x, KvCache& kv) const;

  const TransformerShape& shape() const { return shape_; }

 private:
  struct LayerIds {
    int ln1_g, ln1_b, qkv_w, qkv_b, out_w, out_b, ln2_g, ln2_b, fc_w, fc_b, proj_w, proj_b;
  };
  TransformerShape shape_;
  std::vector<LayerIds> layers_;
  int lnf_g_ = -1, lnf_b_ = -1;
};

}  // namespace flowslm
