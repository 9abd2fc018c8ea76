#pragma once

// Dense layer primitives with explicit backward passes. Activations are
// row-major (one row per position); weights are stored input-major so a
// linear layer computes Y = X W + b.

#include <cmath>
#include <numbers>

#include "flowslm/common.hpp"

namespace flowslm::nn {

template <typename T, typename X, typename W, typename B, typename Y>
void linear_forward(const X& x, const W& w, const B& b, Y& y) {
  y.noalias() = x * w;
  y.rowwise() += b;
}

/// Accumulates dW and db; writes dX when requested.
template <typename T, typename X, typename W, typename DY, typename DW, typename DB>
void linear_backward(const X& x, const W& w, const DY& dy, DW& dw, DB& db, Mat<T>* dx) {
  dw.noalias() += x.transpose() * dy;
  db += dy.colwise().sum();
  if (dx) dx->noalias() = dy * w.transpose();
}

template <typename T>
struct LayerNormCache {
  Mat<T> xhat;
  Vec<T> rstd;
};

template <typename T, typename G, typename B>
void layernorm_forward(const Mat<T>& x, const G& gain, const B& bias, Mat<T>& y,
                       LayerNormCache<T>& cache, T eps = T(1e-5)) {
  const Eigen::Index n = x.rows(), d = x.cols();
  cache.xhat.resize(n, d);
  cache.rstd.resize(n);
  y.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = x.row(i).mean();
    const T var = (x.row(i).array() - mean).square().mean();
    const T rstd = T(1) / std::sqrt(var + eps);
    cache.rstd[i] = rstd;
    cache.xhat.row(i) = (x.row(i).array() - mean) * rstd;
    y.row(i) = cache.xhat.row(i).cwiseProduct(gain) + bias;
  }
}

template <typename T, typename G, typename DG, typename DB>
void layernorm_backward(const LayerNormCache<T>& cache, const G& gain, const Mat<T>& dy,
                        DG& dgain, DB& dbias, Mat<T>& dx) {
  const Eigen::Index n = dy.rows(), d = dy.cols();
  dx.resize(n, d);
  dgain += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  for (Eigen::Index i = 0; i < n; ++i) {
    const RowVec<T> dxhat = dy.row(i).cwiseProduct(gain);
    const T mean_dxhat = dxhat.mean();
    const T mean_dxhat_xhat = dxhat.cwiseProduct(cache.xhat.row(i)).mean();
    dx.row(i) = cache.rstd[i] *
                (dxhat.array() - mean_dxhat - cache.xhat.row(i).array() * mean_dxhat_xhat).matrix();
  }
}

// tanh-approximated GELU
template <typename T>
inline T gelu(T x) {
  const T c = T(std::sqrt(2.0 / std::numbers::pi));
  return T(0.5) * x * (T(1) + std::tanh(c * (x + T(0.044715) * x * x * x)));
}

template <typename T>
inline T gelu_grad(T x) {
  const T c = T(std::sqrt(2.0 / std::numbers::pi));
  const T inner = c * (x + T(0.044715) * x * x * x);
  const T th = std::tanh(inner);
  const T sech2 = T(1) - th * th;
  return T(0.5) * (T(1) + th) + T(0.5) * x * sech2 * c * (T(1) + T(3 * 0.044715) * x * x);
}

template <typename T>
void gelu_forward(const Mat<T>& x, Mat<T>& y) {
  y = x.unaryExpr([](T v) { return gelu(v); });
}

/// dx = dy * gelu'(x)
template <typename T>
void gelu_backward(const Mat<T>& x, const Mat<T>& dy, Mat<T>& dx) {
  dx = dy.cwiseProduct(x.unaryExpr([](T v) { return gelu_grad(v); }));
}

/// In-place numerically stable softmax over one row.
template <typename Row>
void softmax_inplace(Row&& row) {
  const auto m = row.maxCoeff();
  row = (row.array() - m).exp();
  row /= row.sum();
}

/// Sinusoidal embedding of a scalar time in [0,1] (sin half, cos half).
template <typename T>
void time_embedding(T t, int dim, T* out) {
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half));
    const double angle = 1000.0 * static_cast<double>(t) * freq;
    out[i] = static_cast<T>(std::sin(angle));
    out[half + i] = static_cast<T>(std::cos(angle));
  }
  if (dim % 2) out[dim - 1] = t;
}

}  // namespace flowslm::nn
