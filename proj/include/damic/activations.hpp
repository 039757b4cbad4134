#pragma once

#include <algorithm>
#include <cmath>

#include "damic/core.hpp"

namespace damic {

// elu with alpha = 1
inline double elu(double x) { return x >= 0.0 ? x : std::expm1(x); }

// Stable on both tails.
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logsumexp(const double* a, Index n) {
  double m = a[0];
  for (Index i = 1; i < n; ++i) m = std::max(m, a[i]);
  double s = 0.0;
  for (Index i = 0; i < n; ++i) s += std::exp(a[i] - m);
  return m + std::log(s);
}

// Max-subtracted softmax; shift-invariant, rows sum to 1.
inline RowVec softmax(const RowVec& z) {
  RowVec out(z.size());
  double m = z.maxCoeff();
  double s = 0.0;
  for (Index i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - m);
    s += out[i];
  }
  out /= s;
  return out;
}

inline Matrix softmax_rows(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (Index r = 0; r < z.rows(); ++r) {
    double m = z.row(r).maxCoeff();
    double s = 0.0;
    for (Index c = 0; c < z.cols(); ++c) {
      double e = std::exp(z(r, c) - m);
      out(r, c) = e;
      s += e;
    }
    out.row(r) /= s;
  }
  return out;
}

// log softmax per row, computed without forming probabilities.
inline Matrix log_softmax_rows(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (Index r = 0; r < z.rows(); ++r) {
    double lse = logsumexp(z.row(r).data(), z.cols());
    for (Index c = 0; c < z.cols(); ++c) out(r, c) = z(r, c) - lse;
  }
  return out;
}

}  // namespace damic
