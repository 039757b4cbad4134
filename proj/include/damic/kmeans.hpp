#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "damic/core.hpp"

namespace damic {

struct Centroids {
  Matrix means;  // k x dim
  Index k() const { return means.rows(); }
  Index dim() const { return means.cols(); }
};

struct KmeansResult {
  Centroids centroids;
  Labels labels;
  double inertia = 0.0;
  int iterations = 0;
  bool has_empty_cluster = false;
};

struct KmeansConfig {
  int max_iter = 300;
  double tol = 1e-6;  // relative inertia improvement
  int restarts = 10;
  std::uint64_t seed = 0;
};

// Squared-distance-weighted seeding; returns k distinct data points.
inline Centroids kmeanspp_init(const Matrix& X, Index k, std::uint64_t seed) {
  const Index n = X.rows();
  if (n < k) throw InputError("kmeanspp_init: n=" + std::to_string(n) + " < k=" + std::to_string(k));
  Rng rng(seed);
  Centroids c;
  c.means.resize(k, X.cols());
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);

  std::uniform_int_distribution<Index> first(0, n - 1);
  Index idx = first(rng);
  c.means.row(0) = X.row(idx);
  chosen[static_cast<std::size_t>(idx)] = 1;

  ColVec d2 = (X.rowwise() - c.means.row(0)).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Index j = 1; j < k; ++j) {
    double total = 0.0;  // sequential, so the cumulative scan below is consistent
    for (Index t = 0; t < n; ++t) total += d2[t];
    Index pick = -1;
    if (total > 0.0) {
      double r = unit(rng) * total;
      double acc = 0.0;
      for (Index t = 0; t < n; ++t) {
        acc += d2[t];
        if (acc >= r && !chosen[static_cast<std::size_t>(t)]) {
          pick = t;
          break;
        }
      }
    }
    if (pick < 0) {
      // All remaining mass on duplicates of chosen points: fall back to any unchosen index.
      for (Index t = 0; t < n; ++t)
        if (!chosen[static_cast<std::size_t>(t)]) { pick = t; break; }
    }
    c.means.row(j) = X.row(pick);
    chosen[static_cast<std::size_t>(pick)] = 1;
    d2 = d2.cwiseMin((X.rowwise() - c.means.row(j)).rowwise().squaredNorm());
  }
  return c;
}

struct LloydStep {
  Labels labels;
  Centroids centroids;
  double inertia = 0.0;  // w.r.t. the updated centroids
  bool has_empty_cluster = false;
};

// One assignment + update sweep. Ties go to the lowest centroid index;
// a cluster that receives no points keeps its previous mean.
inline LloydStep lloyd_step(const Matrix& X, const Centroids& C) {
  check_shape(X.cols() == C.dim(), "lloyd_step: " + dims(X) + " vs centroids dim " +
                                       std::to_string(C.dim()));
  const Index n = X.rows();
  const Index k = C.k();
  LloydStep out;
  out.labels.resize(static_cast<std::size_t>(n));
  for (Index t = 0; t < n; ++t) {
    Index best = 0;
    double best_d = (X.row(t) - C.means.row(0)).squaredNorm();
    for (Index i = 1; i < k; ++i) {
      double d = (X.row(t) - C.means.row(i)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    out.labels[static_cast<std::size_t>(t)] = static_cast<int>(best);
  }
  out.centroids.means = Matrix::Zero(k, X.cols());
  std::vector<Index> count(static_cast<std::size_t>(k), 0);
  for (Index t = 0; t < n; ++t) {
    Index i = out.labels[static_cast<std::size_t>(t)];
    out.centroids.means.row(i) += X.row(t);
    ++count[static_cast<std::size_t>(i)];
  }
  for (Index i = 0; i < k; ++i) {
    if (count[static_cast<std::size_t>(i)] > 0)
      out.centroids.means.row(i) /= static_cast<double>(count[static_cast<std::size_t>(i)]);
    else {
      out.centroids.means.row(i) = C.means.row(i);
      out.has_empty_cluster = true;
    }
  }
  for (Index t = 0; t < n; ++t)
    out.inertia += (X.row(t) - out.centroids.means.row(out.labels[static_cast<std::size_t>(t)]))
                       .squaredNorm();
  return out;
}

// Best-inertia result over seeded restarts (seed + restart index each).
inline KmeansResult kmeans_fit(const Matrix& X, Index k, const KmeansConfig& cfg = {}) {
  if (X.rows() < k) throw InputError("kmeans_fit: n=" + std::to_string(X.rows()) +
                                     " < k=" + std::to_string(k));
  KmeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  const int restarts = std::max(cfg.restarts, 1);
  for (int r = 0; r < restarts; ++r) {
    Centroids c = kmeanspp_init(X, k, cfg.seed + static_cast<std::uint64_t>(r));
    double prev = std::numeric_limits<double>::infinity();
    LloydStep step;
    int iters = 0;
    for (; iters < cfg.max_iter; ++iters) {
      step = lloyd_step(X, c);
      c = step.centroids;
      if (prev - step.inertia < cfg.tol * std::max(prev, 1e-12)) {
        ++iters;
        break;
      }
      prev = step.inertia;
    }
    if (step.inertia < best.inertia) {
      best.centroids = c;
      best.labels = step.labels;
      best.inertia = step.inertia;
      best.iterations = iters;
      best.has_empty_cluster = step.has_empty_cluster;
    }
  }
  return best;
}

}  // namespace damic
