#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <cstring>

#include "damic/losses.hpp"
#include "damic/model.hpp"
#include "damic/optimizer.hpp"
#include "damic/serialize.hpp"

using namespace damic;

namespace {

Matrix random_matrix(Index rows, Index cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

DamicModel tiny_model(Index d, Index k, std::uint64_t seed, bool batch_norm = false) {
  DamicModel m;
  m.d = d;
  m.k = k;
  Rng rng(seed);
  m.gate = make_gate(d, {4}, 2, k, batch_norm, rng);
  for (Index i = 0; i < k; ++i)
    m.bank.experts.push_back(make_autoencoder(d, {4}, 2, batch_norm, rng).net);
  return m;
}

}  // namespace

TEST_CASE("gate_forward: zero head gives the uniform distribution") {
  DamicModel m = tiny_model(3, 4, 41);
  m.gate.head.W.setZero();
  m.gate.head.b.setZero();
  Rng rng(42);
  Matrix X = random_matrix(5, 3, rng);
  auto [H, P] = gate_forward(m, X);
  for (Index i = 0; i < P.size(); ++i) CHECK(P.data()[i] == 0.25);
  CHECK(H.cols() == 2);  // configured embedding width
}

TEST_CASE("gate_forward: k = 1 gives all ones") {
  DamicModel m = tiny_model(3, 1, 43);
  Rng rng(44);
  auto [H, P] = gate_forward(m, random_matrix(4, 3, rng));
  for (Index i = 0; i < P.size(); ++i) CHECK(P.data()[i] == 1.0);
}

TEST_CASE("gate_forward matches a straight-line evaluation of the softmax head") {
  Rng rng(45);
  GateNetwork gate = make_gate(3, {4}, 0, 2, /*batch_norm=*/false, rng);
  Matrix X = random_matrix(6, 3, rng);
  Matrix H = predict(gate.body, X);
  Matrix P = gate_predict(gate, X);
  for (Index r = 0; r < X.rows(); ++r) {
    double z0 = gate.head.b[0], z1 = gate.head.b[1];
    for (Index i = 0; i < H.cols(); ++i) {
      z0 += gate.head.W(0, i) * H(r, i);
      z1 += gate.head.W(1, i) * H(r, i);
    }
    double e0 = std::exp(z0), e1 = std::exp(z1);
    CHECK(P(r, 0) == doctest::Approx(e0 / (e0 + e1)).epsilon(1e-12));
    CHECK(P(r, 1) == doctest::Approx(e1 / (e0 + e1)).epsilon(1e-12));
  }
}

TEST_CASE("gate_forward rejects dimension mismatch") {
  DamicModel m = tiny_model(3, 2, 46);
  Matrix X = Matrix::Zero(2, 5);
  CHECK_THROWS_AS(gate_forward(m, X), ShapeError);
}

TEST_CASE("hard_assign rules") {
  Matrix P(2, 2);
  P << 0.1, 0.9, 0.5, 0.5;
  Labels labels = hard_assign(P);
  CHECK(labels[0] == 1);
  CHECK(labels[1] == 0);  // tie resolves to the lowest index
}

TEST_CASE("hard_assign agrees with the raw-logit argmax") {
  DamicModel m = tiny_model(4, 3, 47);
  Rng rng(48);
  Matrix X = random_matrix(20, 4, rng);
  GateCache cache = gate_forward_cached(m.gate, X, Mode::eval);
  Labels from_probs = hard_assign(cache.P);
  Labels from_logits = hard_assign(cache.logits);
  CHECK(from_probs == from_logits);
}

TEST_CASE("assign_by_reconstruction rules") {
  Matrix D(2, 2);
  D << 0.1, 0.9, 0.4, 0.4;
  Labels labels = assign_by_reconstruction(D);
  CHECK(labels[0] == 0);
  CHECK(labels[1] == 0);  // tie resolves to the lowest index
}

TEST_CASE("reconstruct_all composes forward and half_sq_distance") {
  DamicModel m = tiny_model(4, 3, 49);
  Rng rng(50);
  Matrix X = random_matrix(7, 4, rng, 0.1, 0.9);
  Reconstructions rec = reconstruct_all(m, X, Mode::eval);
  REQUIRE(rec.D.rows() == 7);
  REQUIRE(rec.D.cols() == 3);
  CHECK(rec.D.minCoeff() >= 0.0);
  for (Index i = 0; i < 3; ++i) {
    Matrix xhat = predict(m.bank.experts[static_cast<std::size_t>(i)], X);
    ColVec d = half_sq_distance(X, xhat);
    for (Index t = 0; t < 7; ++t) CHECK(rec.D(t, i) == d[t]);
  }
}

TEST_CASE("reconstruct_all: k = 1 reduces to one reconstruction error vector") {
  DamicModel m = tiny_model(4, 1, 51);
  Rng rng(52);
  Matrix X = random_matrix(5, 4, rng, 0.1, 0.9);
  Reconstructions rec = reconstruct_all(m, X, Mode::eval);
  CHECK(rec.D.cols() == 1);
  ColVec direct = half_sq_distance(X, predict(m.bank.experts[0], X));
  for (Index t = 0; t < 5; ++t) CHECK(rec.D(t, 0) == direct[t]);
}

TEST_CASE("an expert trained on a single point reconstructs it") {
  Rng rng(53);
  MultiLayerNet expert = make_autoencoder(3, {5}, 2, false, rng).net;
  Matrix x(1, 3);
  x << 0.3, 0.6, 0.8;
  auto ps = params(expert);
  AdamState opt = make_adam(ps, 1e-2);
  for (int step = 0; step < 800; ++step) {
    ForwardCache cache = forward(expert, x, Mode::train);
    auto [loss, dY] = bce_loss(cache.output(), x);
    zero_grads(expert);
    backward(expert, cache, dY);
    adam_step(ps, opt);
  }
  ColVec d = half_sq_distance(x, predict(expert, x));
  CHECK(d[0] < 1e-4);
}

TEST_CASE("damic_loss: k = 1 equals the plain error sum") {
  Matrix P = Matrix::Ones(3, 1);
  Matrix D(3, 1);
  D << 0.5, 1.25, 2.0;
  CHECK(damic_loss(P, D) == 3.75);
}

TEST_CASE("damic_loss: perfect routing and reconstruction gives zero") {
  Matrix P(2, 2), D(2, 2);
  P << 1, 0, 0, 1;
  D << 0, 5, 7, 0;
  CHECK(damic_loss(P, D) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("damic_loss scalar example") {
  Matrix P(1, 2), D(1, 2);
  P << 0.5, 0.5;
  D << 0.0, std::log(2.0);
  CHECK(damic_loss(P, D) == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
  CHECK(damic_loss(P, D) == doctest::Approx(0.287682).epsilon(1e-6));
}

TEST_CASE("damic_loss stays finite and non-negative under extreme inputs") {
  Matrix P(2, 3), D(2, 3);
  P << 1e-30, 1.0, 1e-30, 0.5, 0.5, 1e-30;
  D << 1e6, 1e6, 1e6, 0.0, 1e6, 3.0;
  double loss = damic_loss(P, D);
  CHECK(std::isfinite(loss));
  CHECK(loss >= 0.0);

  Matrix D2 = Matrix::Constant(4, 2, 1e6);
  Matrix P2 = Matrix::Constant(4, 2, 0.5);
  CHECK(std::isfinite(damic_loss(P2, D2)));
}

TEST_CASE("damic_loss rejects shape mismatch") {
  CHECK_THROWS_AS(damic_loss(Matrix::Ones(2, 2), Matrix::Zero(2, 3)), ShapeError);
}

TEST_CASE("soft_assign examples") {
  {
    Matrix P = Matrix::Constant(2, 3, 1.0 / 3.0);
    Matrix D = Matrix::Constant(2, 3, 4.2);
    SoftAssignment W = soft_assign(P, D);
    for (Index i = 0; i < W.size(); ++i)
      CHECK(W.data()[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  {
    SoftAssignment W = soft_assign(Matrix::Ones(3, 1), Matrix::Zero(3, 1));
    for (Index i = 0; i < W.size(); ++i) CHECK(W.data()[i] == 1.0);
  }
  {
    Matrix P(1, 2), D(1, 2);
    P << 0.5, 0.5;
    D << 0.0, std::log(2.0);
    SoftAssignment W = soft_assign(P, D);
    CHECK(W(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(W(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
}

TEST_CASE("soft_assign rows remain stochastic under extreme inputs") {
  Rng rng(54);
  Matrix P = random_matrix(6, 4, rng, 0.0, 1.0);
  P.array() += 1e-30;
  Matrix D = random_matrix(6, 4, rng, 0.0, 1e6);
  SoftAssignment W = soft_assign(P, D);
  for (Index r = 0; r < W.rows(); ++r) {
    CHECK(W.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(W.row(r).minCoeff() >= 0.0);
  }
  // W equals P exactly when all D entries in a row are equal and P is uniform.
  Matrix Pu = Matrix::Constant(2, 4, 0.25);
  Matrix Dc = Matrix::Constant(2, 4, 123.0);
  SoftAssignment Wu = soft_assign(Pu, Dc);
  for (Index i = 0; i < Wu.size(); ++i) CHECK(Wu.data()[i] == 0.25);
}

TEST_CASE("kmeans_equivalence_check walks in lockstep with lloyd") {
  Rng rng(55);
  for (int inst = 0; inst < 5; ++inst) {
    Matrix X = random_matrix(12, 2, rng, -3.0, 3.0);
    Centroids C0 = kmeanspp_init(X, 3, 1000 + static_cast<std::uint64_t>(inst));
    CHECK(kmeans_equivalence_check(X, C0, 5));
  }
}

TEST_CASE("kmeans_equivalence_check: single point, single cluster") {
  Matrix X(1, 2);
  X << 3.5, -1.25;
  Centroids C0;
  C0.means = Matrix::Zero(1, 2);
  CHECK(kmeans_equivalence_check(X, C0, 1));
  LloydStep step = lloyd_step(X, C0);
  CHECK(step.centroids.means(0, 0) == 3.5);
  CHECK(step.centroids.means(0, 1) == -1.25);
}

TEST_CASE("kmeans_equivalence_check: a converged state is a fixed point") {
  Rng rng(56);
  Matrix X = random_matrix(20, 2, rng, -4.0, 4.0);
  Centroids c = kmeanspp_init(X, 3, 9);
  for (int i = 0; i < 100; ++i) c = lloyd_step(X, c).centroids;
  Matrix before = c.means;
  CHECK(kmeans_equivalence_check(X, c, 3));
  LloydStep step = lloyd_step(X, c);
  CHECK(std::memcmp(before.data(), step.centroids.means.data(),
                    sizeof(double) * static_cast<std::size_t>(before.size())) == 0);
}

TEST_CASE("model container round trip is bit-exact") {
  DamicModel m = tiny_model(5, 3, 57, /*batch_norm=*/true);
  Rng rng(58);
  // Touch batch-norm running statistics so the saved state is non-trivial.
  for (int i = 0; i < 3; ++i) {
    Matrix batch = random_matrix(8, 5, rng, 0.0, 1.0);
    gate_forward_cached(m.gate, batch, Mode::train);
    reconstruct_all(m, batch, Mode::train);
  }
  const std::string path = "test_model_roundtrip.bin";
  save_model(path, m);
  DamicModel loaded = load_model(path);
  std::remove(path.c_str());

  REQUIRE(loaded.k == m.k);
  REQUIRE(loaded.d == m.d);
  auto ps_a = model_params(m);
  auto ps_b = model_params(loaded);
  REQUIRE(ps_a.size() == ps_b.size());
  for (std::size_t i = 0; i < ps_a.size(); ++i) {
    REQUIRE(ps_a[i].n == ps_b[i].n);
    CHECK(std::memcmp(ps_a[i].value, ps_b[i].value,
                      sizeof(double) * static_cast<std::size_t>(ps_a[i].n)) == 0);
  }
  Matrix X = random_matrix(6, 5, rng, 0.0, 1.0);
  Matrix pa = gate_predict(m.gate, X);
  Matrix pb = gate_predict(loaded.gate, X);
  CHECK(std::memcmp(pa.data(), pb.data(), sizeof(double) * static_cast<std::size_t>(pa.size())) ==
        0);
  Matrix da = reconstruct_errors(m, X);
  Matrix db = reconstruct_errors(loaded, X);
  CHECK(std::memcmp(da.data(), db.data(), sizeof(double) * static_cast<std::size_t>(da.size())) ==
        0);
}

TEST_CASE("load_model rejects garbage") {
  const std::string path = "test_model_garbage.bin";
  {
    std::ofstream os(path, std::ios::binary);
    os << "not a model container at all";
  }
  CHECK_THROWS_AS(load_model(path), FormatError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_model("no_such_file.bin"), IoError);
}
