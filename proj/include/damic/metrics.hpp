#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "damic/core.hpp"

namespace damic {

struct ContingencyTable {
  std::vector<std::vector<long long>> counts;  // classes x clusters
  long long n = 0;
  std::size_t classes() const { return counts.size(); }
  std::size_t clusters() const { return counts.empty() ? 0 : counts[0].size(); }
};

inline ContingencyTable contingency(const Labels& truth, const Labels& pred) {
  if (truth.size() != pred.size())
    throw InputError("contingency: label vectors differ in length");
  int max_a = -1, max_b = -1;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || pred[i] < 0) throw InputError("contingency: negative label");
    max_a = std::max(max_a, truth[i]);
    max_b = std::max(max_b, pred[i]);
  }
  ContingencyTable t;
  t.n = static_cast<long long>(truth.size());
  t.counts.assign(static_cast<std::size_t>(max_a + 1),
                  std::vector<long long>(static_cast<std::size_t>(max_b + 1), 0));
  for (std::size_t i = 0; i < truth.size(); ++i)
    ++t.counts[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
  return t;
}

enum class NmiNorm { geometric, arithmetic };

// I(U;V) normalized by sqrt(H(U)H(V)) (or the arithmetic mean), natural logs.
inline double nmi(const Labels& truth, const Labels& pred, NmiNorm norm = NmiNorm::geometric) {
  ContingencyTable t = contingency(truth, pred);
  const double n = static_cast<double>(t.n);
  std::vector<long long> row(t.classes(), 0), col(t.clusters(), 0);
  for (std::size_t a = 0; a < t.classes(); ++a)
    for (std::size_t b = 0; b < t.clusters(); ++b) {
      row[a] += t.counts[a][b];
      col[b] += t.counts[a][b];
    }
  double hu = 0.0, hv = 0.0;
  for (long long r : row)
    if (r > 0) hu -= (r / n) * std::log(r / n);
  for (long long c : col)
    if (c > 0) hv -= (c / n) * std::log(c / n);
  if (hu == 0.0 || hv == 0.0) {
    // Degenerate partition(s): identical single-cluster partitions are perfect,
    // anything else carries no usable information.
    return (hu == 0.0 && hv == 0.0) ? 1.0 : 0.0;
  }
  // A bijective table is a relabeling; short-circuit so perfect scores are exactly 1.
  bool bijective = t.classes() == t.clusters();
  for (std::size_t a = 0; bijective && a < t.classes(); ++a) {
    int nonzero = 0;
    for (std::size_t b = 0; b < t.clusters(); ++b)
      if (t.counts[a][b] > 0) ++nonzero;
    if (nonzero != 1) bijective = false;
  }
  for (std::size_t b = 0; bijective && b < t.clusters(); ++b) {
    int nonzero = 0;
    for (std::size_t a = 0; a < t.classes(); ++a)
      if (t.counts[a][b] > 0) ++nonzero;
    if (nonzero != 1) bijective = false;
  }
  if (bijective) return 1.0;
  double mi = 0.0;
  for (std::size_t a = 0; a < t.classes(); ++a)
    for (std::size_t b = 0; b < t.clusters(); ++b) {
      long long c = t.counts[a][b];
      if (c > 0)
        mi += (c / n) * std::log(n * c / (static_cast<double>(row[a]) * static_cast<double>(col[b])));
    }
  double denom = norm == NmiNorm::geometric ? std::sqrt(hu * hv) : 0.5 * (hu + hv);
  return std::clamp(mi / denom, 0.0, 1.0);
}

inline double ari(const Labels& truth, const Labels& pred) {
  ContingencyTable t = contingency(truth, pred);
  auto choose2 = [](long long x) { return 0.5 * static_cast<double>(x) * static_cast<double>(x - 1); };
  std::vector<long long> row(t.classes(), 0), col(t.clusters(), 0);
  double sum_ij = 0.0;
  for (std::size_t a = 0; a < t.classes(); ++a)
    for (std::size_t b = 0; b < t.clusters(); ++b) {
      row[a] += t.counts[a][b];
      col[b] += t.counts[a][b];
      sum_ij += choose2(t.counts[a][b]);
    }
  double sum_a = 0.0, sum_b = 0.0;
  for (long long r : row) sum_a += choose2(r);
  for (long long c : col) sum_b += choose2(c);
  double pairs = choose2(t.n);
  double expected = sum_a * sum_b / pairs;
  double maximum = 0.5 * (sum_a + sum_b);
  if (maximum == expected) return 1.0;  // both partitions trivial, hence identical
  return (sum_ij - expected) / (maximum - expected);
}

// Minimum-cost perfect matching on a square cost matrix, O(n^3) potentials method.
// Returns per-row column assignment.
inline std::vector<int> hungarian_min_assign(const std::vector<std::vector<long long>>& cost) {
  const int n = static_cast<int>(cost.size());
  const long long kInf = std::numeric_limits<long long>::max() / 4;
  std::vector<long long> u(static_cast<std::size_t>(n) + 1, 0), v(static_cast<std::size_t>(n) + 1, 0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<long long> minv(static_cast<std::size_t>(n) + 1, kInf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      int i0 = p[static_cast<std::size_t>(j0)], j1 = -1;
      long long delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        long long cur = cost[static_cast<std::size_t>(i0 - 1)][static_cast<std::size_t>(j - 1)] -
                        u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> result(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j)
    if (p[static_cast<std::size_t>(j)] > 0)
      result[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return result;
}

// Hungarian-matched accuracy: best fraction of points under a cluster-to-class bijection.
inline double acc(const Labels& truth, const Labels& pred) {
  ContingencyTable t = contingency(truth, pred);
  const std::size_t s = std::max(t.classes(), t.clusters());
  std::vector<std::vector<long long>> cost(s, std::vector<long long>(s, 0));
  for (std::size_t a = 0; a < t.classes(); ++a)
    for (std::size_t b = 0; b < t.clusters(); ++b) cost[a][b] = -t.counts[a][b];
  std::vector<int> assign = hungarian_min_assign(cost);
  long long matched = 0;
  for (std::size_t a = 0; a < t.classes(); ++a) {
    std::size_t b = static_cast<std::size_t>(assign[a]);
    if (b < t.clusters()) matched += t.counts[a][b];
  }
  return static_cast<double>(matched) / static_cast<double>(t.n);
}

// Flat "name = value" record, 6 decimal places.
inline void write_metrics_record(std::ostream& os,
                                 const std::vector<std::pair<std::string, double>>& entries) {
  char buf[64];
  for (const auto& [name, value] : entries) {
    std::snprintf(buf, sizeof(buf), "%.6f", value);
    os << name << " = " << buf << "\n";
  }
}

}  // namespace damic
