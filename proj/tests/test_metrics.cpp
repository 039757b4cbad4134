#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "damic/metrics.hpp"

using namespace damic;

namespace {

Labels random_labels(std::size_t n, int k, Rng& rng) {
  std::uniform_int_distribution<int> dist(0, k - 1);
  Labels out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

// Direct formula evaluation from an explicit contingency table.
double nmi_oracle(const std::vector<std::vector<long long>>& counts) {
  long long n = 0;
  for (const auto& row : counts)
    for (long long c : row) n += c;
  std::vector<long long> rows(counts.size(), 0), cols(counts[0].size(), 0);
  for (std::size_t a = 0; a < counts.size(); ++a)
    for (std::size_t b = 0; b < counts[0].size(); ++b) {
      rows[a] += counts[a][b];
      cols[b] += counts[a][b];
    }
  double hu = 0, hv = 0, mi = 0;
  double dn = static_cast<double>(n);
  for (long long r : rows)
    if (r > 0) hu -= (r / dn) * std::log(r / dn);
  for (long long c : cols)
    if (c > 0) hv -= (c / dn) * std::log(c / dn);
  for (std::size_t a = 0; a < counts.size(); ++a)
    for (std::size_t b = 0; b < counts[0].size(); ++b)
      if (counts[a][b] > 0)
        mi += (counts[a][b] / dn) *
              std::log(dn * counts[a][b] / (static_cast<double>(rows[a]) * cols[b]));
  return mi / std::sqrt(hu * hv);
}

// Exhaustive pair enumeration.
double ari_oracle(const Labels& truth, const Labels& pred) {
  const std::size_t n = truth.size();
  double n11 = 0, same_true = 0, same_pred = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      bool st = truth[i] == truth[j];
      bool sp = pred[i] == pred[j];
      if (st && sp) ++n11;
      if (st) ++same_true;
      if (sp) ++same_pred;
    }
  double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  double expected = same_true * same_pred / pairs;
  double maximum = 0.5 * (same_true + same_pred);
  if (maximum == expected) return 1.0;
  return (n11 - expected) / (maximum - expected);
}

// Max matched fraction over all cluster-to-class bijections.
double acc_oracle(const Labels& truth, const Labels& pred) {
  int k = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) k = std::max({k, truth[i] + 1, pred[i] + 1});
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t matched = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
      if (perm[static_cast<std::size_t>(pred[i])] == truth[i]) ++matched;
    best = std::max(best, matched);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(truth.size());
}

}  // namespace

TEST_CASE("contingency examples") {
  ContingencyTable t = contingency({0, 0, 1}, {1, 1, 0});
  REQUIRE(t.classes() == 2);
  REQUIRE(t.clusters() == 2);
  CHECK(t.counts[0][0] == 0);
  CHECK(t.counts[0][1] == 2);
  CHECK(t.counts[1][0] == 1);
  CHECK(t.counts[1][1] == 0);
  CHECK(t.n == 3);

  ContingencyTable diag = contingency({0, 1, 2, 1}, {0, 1, 2, 1});
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      if (a != b) CHECK(diag.counts[a][b] == 0);

  CHECK_THROWS_AS(contingency({0, 1}, {0}), InputError);
}

TEST_CASE("contingency matches an independent tally on random input") {
  Rng rng(31);
  Labels truth = random_labels(50, 4, rng);
  Labels pred = random_labels(50, 3, rng);
  ContingencyTable t = contingency(truth, pred);
  long long total = 0;
  for (std::size_t a = 0; a < t.classes(); ++a)
    for (std::size_t b = 0; b < t.clusters(); ++b) {
      long long manual = 0;
      for (std::size_t i = 0; i < truth.size(); ++i)
        if (truth[i] == static_cast<int>(a) && pred[i] == static_cast<int>(b)) ++manual;
      CHECK(t.counts[a][b] == manual);
      total += manual;
    }
  CHECK(total == 50);
}

TEST_CASE("nmi: relabeled partition scores exactly 1") {
  Labels truth = {0, 0, 1, 1, 2, 2};
  Labels pred = {2, 2, 0, 0, 1, 1};
  CHECK(nmi(truth, pred) == 1.0);
}

TEST_CASE("nmi: degenerate partitions") {
  CHECK(nmi({0, 0, 1, 1}, {0, 0, 0, 0}) == 0.0);
  CHECK(nmi({0, 0, 0, 0}, {0, 0, 0, 0}) == 1.0);  // identical single-cluster partitions
}

TEST_CASE("nmi matches the direct contingency formula") {
  Labels truth = {0, 0, 1, 1};
  Labels pred = {0, 1, 1, 1};
  double oracle = nmi_oracle({{1, 1}, {0, 2}});
  CHECK(nmi(truth, pred) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(oracle == doctest::Approx(0.3455922).epsilon(1e-6));

  Rng rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    Labels a = random_labels(40, 3, rng);
    Labels b = random_labels(40, 4, rng);
    ContingencyTable t = contingency(a, b);
    CHECK(nmi(a, b) == doctest::Approx(nmi_oracle(t.counts)).epsilon(1e-12));
  }
}

TEST_CASE("nmi arithmetic-mean variant") {
  Labels truth = {0, 0, 1, 1};
  Labels pred = {0, 1, 1, 1};
  double geo = nmi(truth, pred, NmiNorm::geometric);
  double arith = nmi(truth, pred, NmiNorm::arithmetic);
  CHECK(arith > 0.0);
  CHECK(arith <= geo + 1e-15);  // geometric mean of entropies <= arithmetic mean
}

TEST_CASE("ari examples") {
  CHECK(ari({0, 0, 1, 1}, {1, 1, 0, 0}) == 1.0);
  CHECK(ari({0, 0, 0, 0}, {0, 1, 2, 3}) == 0.0);
  CHECK(ari({0, 0, 1, 1}, {0, 0, 1, 2}) == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("ari matches exhaustive pair enumeration") {
  Rng rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    Labels a = random_labels(30, 3, rng);
    Labels b = random_labels(30, 4, rng);
    CHECK(ari(a, b) == doctest::Approx(ari_oracle(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("acc examples") {
  CHECK(acc({0, 0, 1, 1}, {1, 1, 0, 0}) == 1.0);
  CHECK(acc({0, 0, 1, 1}, {0, 1, 0, 1}) == 0.5);
}

TEST_CASE("acc equals brute-force permutation search on 200 random instances") {
  Rng rng(34);
  std::uniform_int_distribution<int> ksize(2, 5);
  std::uniform_int_distribution<std::size_t> nsize(5, 40);
  for (int trial = 0; trial < 200; ++trial) {
    int k = ksize(rng);
    std::size_t n = nsize(rng);
    Labels truth = random_labels(n, k, rng);
    Labels pred = random_labels(n, k, rng);
    CHECK(acc(truth, pred) == acc_oracle(truth, pred));
  }
}

TEST_CASE("acc handles more classes than clusters") {
  Labels truth = {0, 1, 2, 2};
  Labels pred = {0, 0, 1, 1};
  CHECK(acc(truth, pred) == acc_oracle(truth, pred));
  CHECK(acc(truth, pred) == doctest::Approx(0.75));
}

TEST_CASE("metrics are invariant under relabeling of predictions") {
  Rng rng(35);
  for (int trial = 0; trial < 10; ++trial) {
    Labels truth = random_labels(30, 3, rng);
    Labels pred = random_labels(30, 4, rng);
    std::vector<int> perm = {2, 3, 1, 0};
    Labels relabeled(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i)
      relabeled[i] = perm[static_cast<std::size_t>(pred[i])];
    CHECK(nmi(truth, pred) == doctest::Approx(nmi(truth, relabeled)).epsilon(1e-12));
    CHECK(ari(truth, pred) == doctest::Approx(ari(truth, relabeled)).epsilon(1e-12));
    CHECK(acc(truth, pred) == acc(truth, relabeled));
  }
}

TEST_CASE("nmi and ari are symmetric") {
  Rng rng(36);
  Labels a = random_labels(25, 3, rng);
  Labels b = random_labels(25, 4, rng);
  CHECK(nmi(a, b) == doctest::Approx(nmi(b, a)).epsilon(1e-12));
  CHECK(ari(a, b) == doctest::Approx(ari(b, a)).epsilon(1e-12));
}

TEST_CASE("metric ranges and exact perfect scores") {
  Rng rng(37);
  for (int trial = 0; trial < 10; ++trial) {
    Labels truth = random_labels(20, 3, rng);
    Labels pred = random_labels(20, 3, rng);
    double n = nmi(truth, pred), a = ari(truth, pred), c = acc(truth, pred);
    CHECK(n >= 0.0);
    CHECK(n <= 1.0);
    CHECK(a >= -1.0);
    CHECK(a <= 1.0);
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
  }
  Labels truth = {0, 1, 2, 0, 1, 2, 1};
  Labels pred = {1, 2, 0, 1, 2, 0, 2};  // same partition, relabeled
  CHECK(nmi(truth, pred) == 1.0);
  CHECK(ari(truth, pred) == 1.0);
  CHECK(acc(truth, pred) == 1.0);
}

TEST_CASE("metrics report record format") {
  std::ostringstream os;
  write_metrics_record(os, {{"nmi", 0.94}, {"ari", 1.0 / 3.0}});
  CHECK(os.str() == "nmi = 0.940000\nari = 0.333333\n");
}
