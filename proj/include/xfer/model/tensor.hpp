#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xfer/rng.hpp"

namespace xfer::model {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

/// Trainable tensor with its gradient accumulator.
template <typename T>
struct Param {
  Mat<T> value;
  Mat<T> grad;

  void resize(Eigen::Index rows, Eigen::Index cols) {
    value = Mat<T>::Zero(rows, cols);
    grad = Mat<T>::Zero(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
  void fill_normal(SeededRng& rng, double stddev) {
    for (Eigen::Index i = 0; i < value.size(); ++i) value.data()[i] = static_cast<T>(rng.normal() * stddev);
  }
};

inline constexpr double kInitStd = 0.02;

/// y = x W + b, W stored [in][out].
template <typename T>
struct Linear {
  Param<T> weight;
  Param<T> bias;

  void init(std::size_t in, std::size_t out, SeededRng& rng, double stddev = kInitStd) {
    weight.resize(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out));
    bias.resize(1, static_cast<Eigen::Index>(out));
    weight.fill_normal(rng, stddev);
  }
  Mat<T> forward(const Mat<T>& x) const {
    Mat<T> y = x * weight.value;
    y.rowwise() += bias.value.row(0);
    return y;
  }
  /// Accumulates parameter gradients and returns dL/dx.
  Mat<T> backward(const Mat<T>& x, const Mat<T>& dy) {
    weight.grad.noalias() += x.transpose() * dy;
    bias.grad.row(0) += dy.colwise().sum();
    return dy * weight.value.transpose();
  }
  template <typename F>
  void for_each_param(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

template <typename T>
struct LayerNorm {
  static constexpr double kEps = 1e-5;
  Param<T> gamma;
  Param<T> beta;

  struct Cache {
    Mat<T> xhat;
    Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std;
  };

  void init(std::size_t dim) {
    gamma.resize(1, static_cast<Eigen::Index>(dim));
    beta.resize(1, static_cast<Eigen::Index>(dim));
    gamma.value.setOnes();
  }
  Mat<T> forward(const Mat<T>& x, Cache* cache = nullptr) const {
    const Eigen::Index n = x.rows();
    const auto d = static_cast<T>(x.cols());
    Mat<T> xhat(x.rows(), x.cols());
    Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const T mean = x.row(i).sum() / d;
      const auto centered = (x.row(i).array() - mean).matrix();
      const T var = centered.squaredNorm() / d;
      inv_std(i) = T(1) / std::sqrt(var + static_cast<T>(kEps));
      xhat.row(i) = centered * inv_std(i);
    }
    Mat<T> y = xhat.array().rowwise() * gamma.value.row(0).array();
    y.rowwise() += beta.value.row(0);
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->inv_std = std::move(inv_std);
    }
    return y;
  }
  Mat<T> backward(const Cache& c, const Mat<T>& dy) {
    gamma.grad.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    beta.grad.row(0) += dy.colwise().sum();
    const auto d = static_cast<T>(dy.cols());
    Mat<T> dxhat = dy.array().rowwise() * gamma.value.row(0).array();
    Mat<T> dx(dy.rows(), dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
      const T mean_dxhat = dxhat.row(i).sum() / d;
      const T mean_dxhat_xhat = dxhat.row(i).dot(c.xhat.row(i)) / d;
      dx.row(i) = ((dxhat.row(i).array() - mean_dxhat - c.xhat.row(i).array() * mean_dxhat_xhat) * c.inv_std(i)).matrix();
    }
    return dx;
  }
  template <typename F>
  void for_each_param(const std::string& prefix, F&& f) {
    f(prefix + ".gamma", gamma);
    f(prefix + ".beta", beta);
  }
};

// tanh-approximated GELU
template <typename T>
inline T gelu(T x) {
  constexpr T k = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  return static_cast<T>(0.5) * x * (T(1) + std::tanh(k * (x + static_cast<T>(0.044715) * x * x * x)));
}

template <typename T>
inline T gelu_grad(T x) {
  constexpr T k = static_cast<T>(0.7978845608028654);
  const T inner = k * (x + static_cast<T>(0.044715) * x * x * x);
  const T t = std::tanh(inner);
  const T dinner = k * (T(1) + static_cast<T>(3 * 0.044715) * x * x);
  return static_cast<T>(0.5) * (T(1) + t) + static_cast<T>(0.5) * x * (T(1) - t * t) * dinner;
}

/// Row-wise log-softmax.
template <typename T>
inline Mat<T> log_softmax_rows(const Mat<T>& logits) {
  Mat<T> out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const T m = logits.row(i).maxCoeff();
    const T lse = m + std::log((logits.row(i).array() - m).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

/// Mean cross-entropy over rows with integer targets; fills dlogits (already
/// divided by the row count) when requested.
template <typename T>
inline T cross_entropy(const Mat<T>& logits, const std::vector<int>& targets, Mat<T>* dlogits, T scale = T(1)) {
  const Mat<T> logp = log_softmax_rows(logits);
  const auto n = static_cast<T>(targets.size());
  T loss = 0;
  if (dlogits) *dlogits = logp.array().exp() * (scale / n);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    loss -= logp(r, targets[i]);
    if (dlogits) (*dlogits)(r, targets[i]) -= scale / n;
  }
  return scale * loss / n;
}

}  // namespace xfer::model
