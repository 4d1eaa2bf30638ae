#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "casvae/errors.hpp"
#include "casvae/rng.hpp"

namespace casvae {

/// Batches are row-major B×F matrices (one sample per contiguous row) so that
/// in-memory layout matches the flat row-major container payloads.
template <typename S>
using MatrixX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using VectorX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using ParamView = Eigen::Map<VectorX<S>>;

using MatrixXf = MatrixX<float>;

// ---------------------------------------------------------------------------
// Dense layer
// ---------------------------------------------------------------------------

template <typename S>
struct DenseLayer {
  MatrixX<S> weight;  // out_dim × in_dim
  VectorX<S> bias;    // out_dim

  /// Uniform init in ±√(6/(fan_in+fan_out)); bias zero. Draw order is fixed
  /// (weight row-major, then nothing for bias) so streams are reproducible.
  static DenseLayer glorot(Eigen::Index in_dim, Eigen::Index out_dim, Rng& rng) {
    DenseLayer layer;
    layer.weight.resize(out_dim, in_dim);
    const double a = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
    for (Eigen::Index i = 0; i < out_dim; ++i)
      for (Eigen::Index j = 0; j < in_dim; ++j)
        layer.weight(i, j) = static_cast<S>(rng.uniform(-a, a));
    layer.bias = VectorX<S>::Zero(out_dim);
    return layer;
  }
};

template <typename S>
MatrixX<S> dense_forward(const MatrixX<S>& x, const DenseLayer<S>& layer) {
  if (x.cols() != layer.weight.cols())
    throw DimensionError("dense_forward: input has " + std::to_string(x.cols()) +
                         " features, layer expects " + std::to_string(layer.weight.cols()));
  MatrixX<S> y = x * layer.weight.transpose();
  y.rowwise() += layer.bias.transpose();
  return y;
}

template <typename S>
struct DenseGrads {
  MatrixX<S> weight;
  VectorX<S> bias;
  MatrixX<S> input;
};

template <typename S>
DenseGrads<S> dense_backward(const MatrixX<S>& x, const DenseLayer<S>& layer,
                             const MatrixX<S>& upstream) {
  if (x.cols() != layer.weight.cols() || upstream.rows() != x.rows() ||
      upstream.cols() != layer.weight.rows())
    throw DimensionError("dense_backward: shapes inconsistent with forward");
  DenseGrads<S> g;
  g.weight = upstream.transpose() * x;
  g.bias = upstream.colwise().sum().transpose();
  g.input = upstream * layer.weight;
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

enum class BatchNormMode { Train, Inference };

template <typename S>
struct BatchNormLayer {
  VectorX<S> gamma, beta;
  VectorX<S> running_mean, running_var;
  S momentum = S(0.1);   // weight of the fresh batch statistics
  S eps = S(1e-5);       // variance floor

  static BatchNormLayer identity(Eigen::Index features) {
    BatchNormLayer layer;
    layer.gamma = VectorX<S>::Ones(features);
    layer.beta = VectorX<S>::Zero(features);
    layer.running_mean = VectorX<S>::Zero(features);
    layer.running_var = VectorX<S>::Ones(features);
    return layer;
  }
};

namespace detail {
template <typename S>
struct BnStats {
  Eigen::Array<S, 1, Eigen::Dynamic> mean, var, inv_std;
  MatrixX<S> xhat;
};

/// Batch statistics with *biased* variance (divide by B), per the
/// analytic-standardization contract {0,2} → {−1,+1}.
template <typename S>
BnStats<S> bn_batch_stats(const MatrixX<S>& x, S eps) {
  BnStats<S> st;
  st.mean = x.colwise().mean();
  st.var = (x.rowwise() - st.mean.matrix()).array().square().colwise().mean();
  st.inv_std = (st.var + eps).rsqrt();
  st.xhat = ((x.rowwise() - st.mean.matrix()).array().rowwise() * st.inv_std).matrix();
  return st;
}
}  // namespace detail

/// Train mode standardizes with batch statistics, applies gamma/beta, and
/// folds the batch statistics into the running estimates with weight
/// `momentum` (running variance stores the unbiased estimate). Inference
/// mode uses running statistics only and never mutates the layer.
template <typename S>
MatrixX<S> batchnorm_forward(const MatrixX<S>& x, BatchNormLayer<S>& layer,
                             BatchNormMode mode) {
  if (x.cols() != layer.gamma.size())
    throw DimensionError("batchnorm_forward: feature count mismatch");
  if (mode == BatchNormMode::Train) {
    const Eigen::Index b = x.rows();
    if (b < 2) throw DimensionError("batchnorm_forward: train mode needs batch size >= 2");
    auto st = detail::bn_batch_stats(x, layer.eps);
    const S m = layer.momentum;
    const S unbias = static_cast<S>(b) / static_cast<S>(b - 1);
    layer.running_mean =
        (S(1) - m) * layer.running_mean.array() + m * st.mean.transpose();
    layer.running_var =
        (S(1) - m) * layer.running_var.array() + m * unbias * st.var.transpose();
    MatrixX<S> y = st.xhat;
    y.array().rowwise() *= layer.gamma.transpose().array();
    y.rowwise() += layer.beta.transpose();
    return y;
  }
  Eigen::Array<S, 1, Eigen::Dynamic> inv_std =
      (layer.running_var.transpose().array() + layer.eps).rsqrt();
  MatrixX<S> y = x;
  y.rowwise() -= layer.running_mean.transpose();
  y.array().rowwise() *= inv_std * layer.gamma.transpose().array();
  y.rowwise() += layer.beta.transpose();
  return y;
}

template <typename S>
struct BatchNormGrads {
  VectorX<S> gamma, beta;
  MatrixX<S> input;
};

/// Analytic gradient of the train-mode forward map (batch statistics are
/// recomputed from x; running-stat updates carry no gradient).
template <typename S>
BatchNormGrads<S> batchnorm_backward(const MatrixX<S>& x, const BatchNormLayer<S>& layer,
                                     const MatrixX<S>& upstream) {
  const Eigen::Index b = x.rows();
  if (b < 2) throw DimensionError("batchnorm_backward: train mode needs batch size >= 2");
  if (x.cols() != layer.gamma.size() || upstream.rows() != x.rows() ||
      upstream.cols() != x.cols())
    throw DimensionError("batchnorm_backward: shapes inconsistent with forward");
  auto st = detail::bn_batch_stats(x, layer.eps);
  BatchNormGrads<S> g;
  g.gamma = (upstream.array() * st.xhat.array()).colwise().sum().transpose();
  g.beta = upstream.colwise().sum().transpose();
  MatrixX<S> dxhat = (upstream.array().rowwise() * layer.gamma.transpose().array()).matrix();
  Eigen::Array<S, 1, Eigen::Dynamic> sum_d = dxhat.colwise().sum();
  Eigen::Array<S, 1, Eigen::Dynamic> sum_dx =
      (dxhat.array() * st.xhat.array()).colwise().sum();
  const S inv_b = S(1) / static_cast<S>(b);
  // dx_i = inv_std ⊙ (dxhat_i − mean_b(dxhat) − xhat_i ⊙ mean_b(dxhat ⊙ xhat))
  MatrixX<S> dx = dxhat;
  dx.array().rowwise() -= sum_d * inv_b;
  dx.array() -= st.xhat.array().rowwise() * (sum_dx * inv_b);
  g.input = (dx.array().rowwise() * st.inv_std).matrix();
  return g;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

enum class Activation { Relu, Tanh, Sigmoid, Identity };

inline Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "identity") return Activation::Identity;
  throw ConfigError("unknown activation '" + name + "'");
}

inline std::string to_string(Activation act) {
  switch (act) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Identity: return "identity";
  }
  throw ConfigError("unknown activation kind");
}

template <typename S>
MatrixX<S> activation_forward(Activation kind, const MatrixX<S>& x) {
  switch (kind) {
    case Activation::Relu:
      return x.array().max(S(0)).matrix();
    case Activation::Tanh:
      return x.array().tanh().matrix();
    case Activation::Sigmoid:
      return (S(1) / (S(1) + (-x.array()).exp())).matrix();
    case Activation::Identity:
      return x;
  }
  throw ConfigError("unknown activation kind");
}

/// Derivative evaluated at the activation *input* x (relu'(0) := 0).
template <typename S>
MatrixX<S> activation_backward(Activation kind, const MatrixX<S>& x,
                               const MatrixX<S>& upstream) {
  if (upstream.rows() != x.rows() || upstream.cols() != x.cols())
    throw DimensionError("activation_backward: upstream shape mismatch");
  switch (kind) {
    case Activation::Relu:
      return (upstream.array() * (x.array() > S(0)).template cast<S>()).matrix();
    case Activation::Tanh: {
      auto t = x.array().tanh();
      return (upstream.array() * (S(1) - t.square())).matrix();
    }
    case Activation::Sigmoid: {
      auto s = S(1) / (S(1) + (-x.array()).exp());
      return (upstream.array() * s * (S(1) - s)).matrix();
    }
    case Activation::Identity:
      return upstream;
  }
  throw ConfigError("unknown activation kind");
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename S>
struct AdamState {
  VectorX<S> first_moment, second_moment;  // flat, one slot per parameter
  long step_count = 0;
  S beta1 = S(0.9), beta2 = S(0.999);
  S lr = S(1e-3);
  S eps = S(1e-8);

  static AdamState init(Eigen::Index n_params, S lr = S(1e-3)) {
    AdamState st;
    st.first_moment = VectorX<S>::Zero(n_params);
    st.second_moment = VectorX<S>::Zero(n_params);
    st.lr = lr;
    return st;
  }
};

/// Standard bias-corrected Adam over a flat list of parameter views. A zero
/// gradient with zero moments is an exact no-op for any step_count.
template <typename S>
void adam_step(std::vector<ParamView<S>>& params, const std::vector<VectorX<S>>& grads,
               AdamState<S>& state) {
  if (params.size() != grads.size())
    throw DimensionError("adam_step: params/grads tensor count mismatch");
  Eigen::Index total = 0;
  for (const auto& p : params) total += p.size();
  if (total != state.first_moment.size())
    throw DimensionError("adam_step: state sized for " +
                         std::to_string(state.first_moment.size()) + " params, got " +
                         std::to_string(total));
  state.step_count += 1;
  const S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(state.beta1),
                                               static_cast<double>(state.step_count)));
  const S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(state.beta2),
                                               static_cast<double>(state.step_count)));
  Eigen::Index off = 0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != grads[t].size())
      throw DimensionError("adam_step: tensor " + std::to_string(t) + " shape mismatch");
    auto m = state.first_moment.segment(off, params[t].size());
    auto v = state.second_moment.segment(off, params[t].size());
    m = state.beta1 * m + (S(1) - state.beta1) * grads[t];
    v = (state.beta2 * v.array() + (S(1) - state.beta2) * grads[t].array().square()).matrix();
    params[t].array() -=
        state.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.eps);
    off += params[t].size();
  }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification
// ---------------------------------------------------------------------------

template <typename S>
struct GradCheckReport {
  S max_rel_err = S(0);
  Eigen::Index worst_tensor = -1;
  Eigen::Index worst_coord = -1;
  bool pass = false;
};

/// Central-difference check of analytic gradients, coordinate by coordinate.
/// `loss` must re-evaluate the objective with the current parameter values.
/// Relative error is |a − g| / max(|a|, |g|, floor).
template <typename S>
GradCheckReport<S> grad_check(const std::function<S()>& loss,
                              std::vector<ParamView<S>> params,
                              const std::vector<VectorX<S>>& analytic, S h, S tol,
                              S floor = S(1e-6)) {
  if (params.size() != analytic.size())
    throw DimensionError("grad_check: params/analytic tensor count mismatch");
  GradCheckReport<S> report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != analytic[t].size())
      throw DimensionError("grad_check: tensor " + std::to_string(t) + " shape mismatch");
    for (Eigen::Index i = 0; i < params[t].size(); ++i) {
      const S saved = params[t][i];
      params[t][i] = saved + h;
      const S f_plus = loss();
      params[t][i] = saved - h;
      const S f_minus = loss();
      params[t][i] = saved;
      const S fd = (f_plus - f_minus) / (S(2) * h);
      const S a = analytic[t][i];
      const S rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_tensor = static_cast<Eigen::Index>(t);
        report.worst_coord = i;
      }
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace casvae
