#pragma once

#include <cstring>
#include <utility>
#include <vector>

#include "damic/activations.hpp"
#include "damic/core.hpp"
#include "damic/kmeans.hpp"
#include "damic/layers.hpp"
#include "damic/losses.hpp"

namespace damic {

constexpr double kProbFloor = 1e-30;

// Routing network: body computes the embedding h(x), head maps it to k logits.
struct GateNetwork {
  MultiLayerNet body;
  AffineLayer head;
  Index k() const { return head.out_dim(); }
};

// One reconstruction expert per cluster; every expert maps R^d -> R^d.
struct AutoencoderBank {
  std::vector<MultiLayerNet> experts;
  Index k() const { return static_cast<Index>(experts.size()); }
};

struct DamicModel {
  GateNetwork gate;
  AutoencoderBank bank;
  Index k = 0;
  Index d = 0;
};

// n x k responsibilities, rows non-negative and summing to 1.
using SoftAssignment = Matrix;

struct GateCache {
  ForwardCache body;
  Matrix H;       // embedding h(x)
  Matrix logits;  // w_i h(x) + b_i
  Matrix P;       // softmax rows
  Matrix logP;    // log softmax rows, kept for the loss
};

inline GateCache gate_forward_cached(GateNetwork& gate, const Matrix& X, Mode mode) {
  GateCache c;
  c.body = forward(gate.body, X, mode);
  c.H = c.body.output();
  c.logits = affine_forward(gate.head, c.H);
  c.P = softmax_rows(c.logits);
  c.logP = log_softmax_rows(c.logits);
  return c;
}

// Embedding and cluster distribution, eval mode.
inline std::pair<Matrix, Matrix> gate_forward(DamicModel& model, const Matrix& X) {
  check_shape(X.cols() == model.d, "gate_forward: input " + dims(X) + " vs d=" +
                                       std::to_string(model.d));
  GateCache c = gate_forward_cached(model.gate, X, Mode::eval);
  return {std::move(c.H), std::move(c.P)};
}

// argmax per row; ties resolve to the lowest index.
inline Labels hard_assign(const Matrix& P) {
  Labels labels(static_cast<std::size_t>(P.rows()));
  for (Index r = 0; r < P.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < P.cols(); ++c)
      if (P(r, c) > P(r, best)) best = c;
    labels[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return labels;
}

// argmin per row; ties resolve to the lowest index.
inline Labels assign_by_reconstruction(const Matrix& D) {
  Labels labels(static_cast<std::size_t>(D.rows()));
  for (Index r = 0; r < D.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < D.cols(); ++c)
      if (D(r, c) < D(r, best)) best = c;
    labels[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return labels;
}

struct Reconstructions {
  std::vector<Matrix> xhat;          // one n x d matrix per expert
  Matrix D;                          // n x k reconstruction errors
  std::vector<ForwardCache> caches;  // per expert, for the backward pass
};

inline Reconstructions reconstruct_all(DamicModel& model, const Matrix& X, Mode mode) {
  check_shape(X.cols() == model.d, "reconstruct_all: input " + dims(X) + " vs d=" +
                                       std::to_string(model.d));
  Reconstructions r;
  const Index k = model.bank.k();
  r.D.resize(X.rows(), k);
  r.xhat.reserve(static_cast<std::size_t>(k));
  r.caches.reserve(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) {
    r.caches.push_back(forward(model.bank.experts[static_cast<std::size_t>(i)], X, mode));
    r.xhat.push_back(r.caches.back().output());
    r.D.col(i) = half_sq_distance(X, r.xhat.back());
  }
  return r;
}

// Mixture loss over log-space terms a_ti = log p_ti - d_ti.
inline double damic_loss_terms(const Matrix& logP, const Matrix& D) {
  check_shape(logP.rows() == D.rows() && logP.cols() == D.cols(),
              "damic_loss: " + dims(logP) + " vs " + dims(D));
  std::vector<double> a(static_cast<std::size_t>(logP.cols()));
  double total = 0.0;
  for (Index r = 0; r < logP.rows(); ++r) {
    for (Index c = 0; c < logP.cols(); ++c) a[static_cast<std::size_t>(c)] = logP(r, c) - D(r, c);
    total -= logsumexp(a.data(), logP.cols());
  }
  // Each inner sum is <= 1, so mathematically total >= 0; clip rounding residue.
  return std::max(total, 0.0);
}

// -sum_t log sum_i P[t][i] exp(-D[t][i]), stabilized via log-sum-exp.
inline double damic_loss(const Matrix& P, const Matrix& D) {
  Matrix logP = P.unaryExpr([](double p) { return std::log(std::max(p, kProbFloor)); });
  return damic_loss_terms(logP, D);
}

inline SoftAssignment soft_assign_terms(const Matrix& logP, const Matrix& D) {
  check_shape(logP.rows() == D.rows() && logP.cols() == D.cols(),
              "soft_assign: " + dims(logP) + " vs " + dims(D));
  return softmax_rows(logP - D);
}

// w_ti = P[t][i] exp(-D[t][i]) / sum_j P[t][j] exp(-D[t][j]).
inline SoftAssignment soft_assign(const Matrix& P, const Matrix& D) {
  Matrix logP = P.unaryExpr([](double p) { return std::log(std::max(p, kProbFloor)); });
  return soft_assign_terms(logP, D);
}

// Cluster distribution only, eval mode, no caches retained.
inline Matrix gate_predict(GateNetwork& gate, const Matrix& X) {
  Matrix H = predict(gate.body, X);
  return softmax_rows(affine_forward(gate.head, H));
}

// n x k reconstruction errors, eval mode, no caches retained.
inline Matrix reconstruct_errors(DamicModel& model, const Matrix& X) {
  check_shape(X.cols() == model.d, "reconstruct_errors: input " + dims(X) + " vs d=" +
                                       std::to_string(model.d));
  Matrix D(X.rows(), model.bank.k());
  for (Index i = 0; i < model.bank.k(); ++i)
    D.col(i) = half_sq_distance(X, predict(model.bank.experts[static_cast<std::size_t>(i)], X));
  return D;
}

struct BuiltAutoencoder {
  MultiLayerNet net;
  std::size_t bottleneck_act = 0;  // index into ForwardCache::acts of the bottleneck activation
};

// Symmetric autoencoder: in -> enc_hidden... -> bottleneck -> mirrored decoder -> sigmoid(in).
inline BuiltAutoencoder make_autoencoder(Index d, const std::vector<Index>& enc_hidden,
                                         Index bottleneck, bool batch_norm, Rng& rng) {
  std::vector<Index> hidden = enc_hidden;
  hidden.push_back(bottleneck);
  hidden.insert(hidden.end(), enc_hidden.rbegin(), enc_hidden.rend());
  BuiltAutoencoder built;
  built.net = make_mlp(d, hidden, d, Activation::elu, Activation::sigmoid, batch_norm, rng);
  built.bottleneck_act = (enc_hidden.size() + 1) * (batch_norm ? 3u : 2u);
  return built;
}

// The embedding layer counts as hidden, so it gets batch norm like the rest of the body.
inline GateNetwork make_gate(Index d, const std::vector<Index>& hidden, Index embedding_dim,
                             Index k, bool batch_norm, Rng& rng) {
  std::vector<Index> body_sizes = hidden;
  if (embedding_dim > 0 && (body_sizes.empty() || body_sizes.back() != embedding_dim))
    body_sizes.push_back(embedding_dim);
  GateNetwork gate;
  gate.body = make_feature_stack(d, body_sizes, Activation::elu, batch_norm, rng);
  gate.head = AffineLayer(k, gate.body.out_dim);
  init_affine(gate.head, rng);
  return gate;
}

inline std::vector<ParamRef> gate_params(GateNetwork& gate) {
  std::vector<ParamRef> out;
  collect_params(gate.body, out);
  out.push_back({gate.head.W.data(), gate.head.dW.data(), gate.head.W.size()});
  out.push_back({gate.head.b.data(), gate.head.db.data(), gate.head.b.size()});
  return out;
}

inline std::vector<ParamRef> model_params(DamicModel& model) {
  std::vector<ParamRef> out = gate_params(model.gate);
  for (auto& expert : model.bank.experts) collect_params(expert, out);
  return out;
}

inline void zero_model_grads(DamicModel& model) {
  zero_grads(model.gate.body);
  model.gate.head.dW.setZero();
  model.gate.head.db.setZero();
  for (auto& expert : model.bank.experts) zero_grads(expert);
}

// Degeneration argument made executable: constant experts f_i(x) = mu_i plus
// hard min-reconstruction routing must walk in lockstep with Lloyd iterations.
inline bool kmeans_equivalence_check(const Matrix& X, const Centroids& C0, int steps) {
  Centroids mixture = C0;
  Centroids lloyd = C0;
  const Index n = X.rows();
  const Index k = C0.k();
  for (int s = 0; s < steps; ++s) {
    Matrix D(n, k);
    for (Index i = 0; i < k; ++i) {
      Matrix mu = mixture.means.row(i).replicate(n, 1);
      D.col(i) = half_sq_distance(X, mu);
    }
    Labels labels = assign_by_reconstruction(D);

    Matrix means = Matrix::Zero(k, X.cols());
    std::vector<Index> count(static_cast<std::size_t>(k), 0);
    for (Index t = 0; t < n; ++t) {
      means.row(labels[static_cast<std::size_t>(t)]) += X.row(t);
      ++count[static_cast<std::size_t>(labels[static_cast<std::size_t>(t)])];
    }
    for (Index i = 0; i < k; ++i) {
      if (count[static_cast<std::size_t>(i)] > 0)
        means.row(i) /= static_cast<double>(count[static_cast<std::size_t>(i)]);
      else
        means.row(i) = mixture.means.row(i);
    }

    LloydStep ref = lloyd_step(X, lloyd);
    if (labels != ref.labels) return false;
    if (std::memcmp(means.data(), ref.centroids.means.data(),
                    sizeof(double) * static_cast<std::size_t>(means.size())) != 0)
      return false;
    mixture.means = std::move(means);
    lloyd = ref.centroids;
  }
  return true;
}

}  // namespace damic
