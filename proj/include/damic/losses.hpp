#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "damic/core.hpp"

namespace damic {

constexpr double kBceClamp = 1e-7;

// Binary cross-entropy: mean over samples of the per-sample feature sum.
// Predictions are clamped to [kBceClamp, 1 - kBceClamp] before the logs.
inline std::pair<double, Matrix> bce_loss(const Matrix& Y, const Matrix& T) {
  check_shape(Y.rows() == T.rows() && Y.cols() == T.cols(),
              "bce_loss: " + dims(Y) + " vs " + dims(T));
  const double n = static_cast<double>(Y.rows());
  double loss = 0.0;
  Matrix dY(Y.rows(), Y.cols());
  for (Index i = 0; i < Y.size(); ++i) {
    double y = std::clamp(Y.data()[i], kBceClamp, 1.0 - kBceClamp);
    double t = T.data()[i];
    loss -= t * std::log(y) + (1.0 - t) * std::log(1.0 - y);
    dY.data()[i] = (-t / y + (1.0 - t) / (1.0 - y)) / n;
  }
  return {loss / n, dY};
}

// Softmax cross-entropy straight from logits; adjoint is (P - onehot)/n.
inline std::pair<double, Matrix> ce_with_logits(const Matrix& logits, const Labels& labels) {
  check_shape(static_cast<Index>(labels.size()) == logits.rows(),
              "ce_with_logits: " + std::to_string(labels.size()) + " labels vs " + dims(logits));
  const double n = static_cast<double>(logits.rows());
  double loss = 0.0;
  Matrix dZ(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    double m = logits.row(r).maxCoeff();
    double s = 0.0;
    for (Index c = 0; c < logits.cols(); ++c) s += std::exp(logits(r, c) - m);
    double lse = m + std::log(s);
    loss += lse - logits(r, labels[static_cast<std::size_t>(r)]);
    for (Index c = 0; c < logits.cols(); ++c)
      dZ(r, c) = std::exp(logits(r, c) - lse) / n;
    dZ(r, labels[static_cast<std::size_t>(r)]) -= 1.0 / n;
  }
  return {loss / n, dZ};
}

// Per-sample d_t = 0.5 * ||x_t - xhat_t||^2.
inline ColVec half_sq_distance(const Matrix& X, const Matrix& Xhat) {
  check_shape(X.rows() == Xhat.rows() && X.cols() == Xhat.cols(),
              "half_sq_distance: " + dims(X) + " vs " + dims(Xhat));
  return 0.5 * (X - Xhat).rowwise().squaredNorm();
}

}  // namespace damic
