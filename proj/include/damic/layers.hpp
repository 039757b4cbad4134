#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include "damic/activations.hpp"
#include "damic/core.hpp"

namespace damic {

enum class Mode { train, eval };
enum class Activation { identity, elu, sigmoid, softmax };

struct AffineLayer {
  Matrix W;  // out x in
  RowVec b;  // out
  Matrix dW;
  RowVec db;

  AffineLayer() = default;
  AffineLayer(Index out, Index in)
      : W(Matrix::Zero(out, in)), b(RowVec::Zero(out)),
        dW(Matrix::Zero(out, in)), db(RowVec::Zero(out)) {}

  Index in_dim() const { return W.cols(); }
  Index out_dim() const { return W.rows(); }
};

struct BatchNormLayer {
  RowVec gamma, beta;
  RowVec running_mean, running_var;
  double momentum = 0.9;
  double epsilon = 1e-5;
  RowVec dgamma, dbeta;

  BatchNormLayer() = default;
  explicit BatchNormLayer(Index features)
      : gamma(RowVec::Ones(features)), beta(RowVec::Zero(features)),
        running_mean(RowVec::Zero(features)), running_var(RowVec::Ones(features)),
        dgamma(RowVec::Zero(features)), dbeta(RowVec::Zero(features)) {}

  Index features() const { return gamma.size(); }
};

struct ActivationLayer {
  Activation kind = Activation::identity;
};

using Layer = std::variant<AffineLayer, BatchNormLayer, ActivationLayer>;

struct MultiLayerNet {
  std::vector<Layer> layers;
  Index in_dim = 0;
  Index out_dim = 0;
};

// Uniform view over one parameter tensor and its gradient slot.
struct ParamRef {
  double* value = nullptr;
  double* grad = nullptr;
  Index n = 0;

  Eigen::Map<Eigen::ArrayXd> v() const { return {value, n}; }
  Eigen::Map<Eigen::ArrayXd> g() const { return {grad, n}; }
};

inline void collect_params(MultiLayerNet& net, std::vector<ParamRef>& out) {
  for (auto& layer : net.layers) {
    if (auto* a = std::get_if<AffineLayer>(&layer)) {
      out.push_back({a->W.data(), a->dW.data(), a->W.size()});
      out.push_back({a->b.data(), a->db.data(), a->b.size()});
    } else if (auto* bn = std::get_if<BatchNormLayer>(&layer)) {
      out.push_back({bn->gamma.data(), bn->dgamma.data(), bn->gamma.size()});
      out.push_back({bn->beta.data(), bn->dbeta.data(), bn->beta.size()});
    }
  }
}

inline std::vector<ParamRef> params(MultiLayerNet& net) {
  std::vector<ParamRef> out;
  collect_params(net, out);
  return out;
}

inline void zero_grads(MultiLayerNet& net) {
  for (auto& layer : net.layers) {
    if (auto* a = std::get_if<AffineLayer>(&layer)) {
      a->dW.setZero();
      a->db.setZero();
    } else if (auto* bn = std::get_if<BatchNormLayer>(&layer)) {
      bn->dgamma.setZero();
      bn->dbeta.setZero();
    }
  }
}

inline Matrix affine_forward(const AffineLayer& a, const Matrix& X) {
  check_shape(X.cols() == a.in_dim(), "affine: input " + dims(X) + " vs weight in_dim " +
                                          std::to_string(a.in_dim()));
  Matrix Y(X.rows(), a.out_dim());
  Y.noalias() = X * a.W.transpose();
  Y.rowwise() += a.b;
  return Y;
}

// Accumulates dW/db, returns dX.
inline Matrix affine_backward(AffineLayer& a, const Matrix& X_in, const Matrix& dY) {
  a.dW.noalias() += dY.transpose() * X_in;
  a.db += dY.colwise().sum();
  Matrix dX(dY.rows(), a.in_dim());
  dX.noalias() = dY * a.W;
  return dX;
}

struct BnCache {
  RowVec mean;
  RowVec inv_std;
  Matrix xhat;
  bool train = false;
};

inline Matrix batchnorm_forward(BatchNormLayer& bn, const Matrix& X, Mode mode, BnCache& cache) {
  check_shape(X.cols() == bn.features(), "batchnorm: input " + dims(X) + " vs features " +
                                             std::to_string(bn.features()));
  cache.train = (mode == Mode::train);
  if (cache.train) {
    cache.mean = X.colwise().mean();
    Matrix centered = X.rowwise() - cache.mean;
    RowVec var = centered.array().square().colwise().mean();
    cache.inv_std = (var.array() + bn.epsilon).rsqrt();
    cache.xhat = centered.array().rowwise() * cache.inv_std.array();
    bn.running_mean = bn.momentum * bn.running_mean + (1.0 - bn.momentum) * cache.mean;
    bn.running_var = bn.momentum * bn.running_var + (1.0 - bn.momentum) * var;
  } else {
    cache.mean = bn.running_mean;
    cache.inv_std = (bn.running_var.array() + bn.epsilon).rsqrt();
    cache.xhat = (X.rowwise() - cache.mean).array().rowwise() * cache.inv_std.array();
  }
  Matrix Y = cache.xhat.array().rowwise() * bn.gamma.array();
  Y.rowwise() += bn.beta;
  return Y;
}

inline Matrix batchnorm_backward(BatchNormLayer& bn, const BnCache& cache, const Matrix& dY) {
  bn.dgamma += (dY.array() * cache.xhat.array()).colwise().sum().matrix();
  bn.dbeta += dY.colwise().sum();
  Matrix dxhat = dY.array().rowwise() * bn.gamma.array();
  if (!cache.train) {
    // Frozen statistics: the normalization is an affine map with constant scale.
    return dxhat.array().rowwise() * cache.inv_std.array();
  }
  const double B = static_cast<double>(dY.rows());
  RowVec sum_dxhat = dxhat.colwise().sum();
  RowVec sum_dxhat_xhat = (dxhat.array() * cache.xhat.array()).colwise().sum().matrix();
  Matrix dX = B * dxhat;
  dX.rowwise() -= sum_dxhat;
  dX.array() -= cache.xhat.array().rowwise() * sum_dxhat_xhat.array();
  dX.array().rowwise() *= (cache.inv_std.array() / B);
  return dX;
}

inline Matrix apply_activation(Activation kind, const Matrix& X) {
  switch (kind) {
    case Activation::identity:
      return X;
    case Activation::elu:
      return X.unaryExpr([](double x) { return elu(x); });
    case Activation::sigmoid:
      return X.unaryExpr([](double x) { return sigmoid(x); });
    case Activation::softmax:
      return softmax_rows(X);
  }
  return X;
}

// x = pre-activation input, y = activation output (both known from the cache).
inline Matrix activation_backward(Activation kind, const Matrix& x, const Matrix& y,
                                  const Matrix& dY) {
  switch (kind) {
    case Activation::identity:
      return dY;
    case Activation::elu: {
      Matrix dX(x.rows(), x.cols());
      for (Index i = 0; i < x.size(); ++i)
        dX.data()[i] = dY.data()[i] * (x.data()[i] >= 0.0 ? 1.0 : y.data()[i] + 1.0);
      return dX;
    }
    case Activation::sigmoid:
      return (dY.array() * y.array() * (1.0 - y.array())).matrix();
    case Activation::softmax: {
      Matrix dX(x.rows(), x.cols());
      for (Index r = 0; r < x.rows(); ++r) {
        double dot = dY.row(r).dot(y.row(r));
        dX.row(r) = (y.row(r).array() * (dY.row(r).array() - dot)).matrix();
      }
      return dX;
    }
  }
  return dY;
}

struct ForwardCache {
  // acts[0] = input, acts[i + 1] = output of layer i.
  std::vector<Matrix> acts;
  std::vector<BnCache> bn;
  Mode mode = Mode::eval;
  const MultiLayerNet* net = nullptr;

  const Matrix& output() const { return acts.back(); }
};

inline ForwardCache forward(MultiLayerNet& net, const Matrix& X, Mode mode) {
  check_shape(X.cols() == net.in_dim,
              "forward: input " + dims(X) + " vs net in_dim " + std::to_string(net.in_dim));
  ForwardCache cache;
  cache.mode = mode;
  cache.net = &net;
  cache.acts.reserve(net.layers.size() + 1);
  cache.bn.resize(net.layers.size());
  cache.acts.push_back(X);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Matrix& in = cache.acts.back();
    Matrix out;
    if (auto* a = std::get_if<AffineLayer>(&net.layers[i])) {
      out = affine_forward(*a, in);
    } else if (auto* b = std::get_if<BatchNormLayer>(&net.layers[i])) {
      out = batchnorm_forward(*b, in, mode, cache.bn[i]);
    } else {
      out = apply_activation(std::get<ActivationLayer>(net.layers[i]).kind, in);
    }
    cache.acts.push_back(std::move(out));
  }
  return cache;
}

// Eval-mode forward that keeps only the output.
inline Matrix predict(MultiLayerNet& net, const Matrix& X) {
  check_shape(X.cols() == net.in_dim,
              "predict: input " + dims(X) + " vs net in_dim " + std::to_string(net.in_dim));
  Matrix cur = X;
  BnCache scratch;
  for (auto& layer : net.layers) {
    if (auto* a = std::get_if<AffineLayer>(&layer)) {
      cur = affine_forward(*a, cur);
    } else if (auto* b = std::get_if<BatchNormLayer>(&layer)) {
      cur = batchnorm_forward(*b, cur, Mode::eval, scratch);
    } else {
      cur = apply_activation(std::get<ActivationLayer>(layer).kind, cur);
    }
  }
  return cur;
}

// Accumulates parameter gradients into the net, returns dX.
inline Matrix backward(MultiLayerNet& net, const ForwardCache& cache, const Matrix& dY) {
  if (cache.net != &net || cache.acts.size() != net.layers.size() + 1)
    throw StateError("backward: cache does not belong to this net");
  check_shape(dY.rows() == cache.output().rows() && dY.cols() == cache.output().cols(),
              "backward: adjoint " + dims(dY) + " vs output " + dims(cache.output()));
  Matrix grad = dY;
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    const Matrix& in = cache.acts[i];
    const Matrix& out = cache.acts[i + 1];
    if (auto* a = std::get_if<AffineLayer>(&net.layers[i])) {
      grad = affine_backward(*a, in, grad);
    } else if (auto* b = std::get_if<BatchNormLayer>(&net.layers[i])) {
      grad = batchnorm_backward(*b, cache.bn[i], grad);
    } else {
      grad = activation_backward(std::get<ActivationLayer>(net.layers[i]).kind, in, out, grad);
    }
  }
  return grad;
}

inline void init_affine(AffineLayer& a, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(a.in_dim()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Index i = 0; i < a.W.size(); ++i) a.W.data()[i] = dist(rng);
  a.b.setZero();
}

// Eval-mode forward up to (not including) layer `n_layers`; returns that activation.
inline Matrix forward_prefix(MultiLayerNet& net, const Matrix& X, std::size_t n_layers) {
  check_shape(X.cols() == net.in_dim,
              "forward_prefix: input " + dims(X) + " vs net in_dim " + std::to_string(net.in_dim));
  if (n_layers > net.layers.size()) throw StateError("forward_prefix: layer index out of range");
  Matrix cur = X;
  BnCache scratch;
  for (std::size_t i = 0; i < n_layers; ++i) {
    if (auto* a = std::get_if<AffineLayer>(&net.layers[i])) {
      cur = affine_forward(*a, cur);
    } else if (auto* b = std::get_if<BatchNormLayer>(&net.layers[i])) {
      cur = batchnorm_forward(*b, cur, Mode::eval, scratch);
    } else {
      cur = apply_activation(std::get<ActivationLayer>(net.layers[i]).kind, cur);
    }
  }
  return cur;
}

// affine -> [batchnorm] -> activation blocks only; the output is the last hidden activation.
inline MultiLayerNet make_feature_stack(Index in_dim, const std::vector<Index>& hidden,
                                        Activation act, bool batch_norm, Rng& rng) {
  MultiLayerNet net;
  net.in_dim = in_dim;
  net.out_dim = hidden.empty() ? in_dim : hidden.back();
  Index prev = in_dim;
  for (Index h : hidden) {
    AffineLayer a(h, prev);
    init_affine(a, rng);
    net.layers.emplace_back(std::move(a));
    if (batch_norm) net.layers.emplace_back(BatchNormLayer(h));
    net.layers.emplace_back(ActivationLayer{act});
    prev = h;
  }
  return net;
}

// Stack of affine -> [batchnorm] -> activation blocks; batch norm only on hidden layers.
inline MultiLayerNet make_mlp(Index in_dim, const std::vector<Index>& hidden, Index out_dim,
                              Activation hidden_act, Activation out_act, bool batch_norm,
                              Rng& rng) {
  MultiLayerNet net;
  net.in_dim = in_dim;
  net.out_dim = out_dim;
  Index prev = in_dim;
  for (Index h : hidden) {
    AffineLayer a(h, prev);
    init_affine(a, rng);
    net.layers.emplace_back(std::move(a));
    if (batch_norm) net.layers.emplace_back(BatchNormLayer(h));
    net.layers.emplace_back(ActivationLayer{hidden_act});
    prev = h;
  }
  AffineLayer out(out_dim, prev);
  init_affine(out, rng);
  net.layers.emplace_back(std::move(out));
  net.layers.emplace_back(ActivationLayer{out_act});
  return net;
}

}  // namespace damic
