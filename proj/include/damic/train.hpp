#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "damic/core.hpp"
#include "damic/kmeans.hpp"
#include "damic/losses.hpp"
#include "damic/metrics.hpp"
#include "damic/model.hpp"
#include "damic/optimizer.hpp"

namespace damic {

enum class TrainMode { full, pretrain_only, joint_only_random_init, reconstruction_only };

inline const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::full: return "full";
    case TrainMode::pretrain_only: return "pretrain_only";
    case TrainMode::joint_only_random_init: return "joint_only_random_init";
    case TrainMode::reconstruction_only: return "reconstruction_only";
  }
  return "full";
}

struct EarlyStopConfig {
  int patience = 5;
  double min_rel_improvement = 1e-4;
};

struct TrainConfig {
  Index k = 4;
  int epochs = 50;
  int batch_size = 256;
  std::uint64_t seed = 1;
  EarlyStopConfig early_stop;
  TrainMode mode = TrainMode::full;
  Index embedding_dim = 512;              // 0 = embed at the last gate hidden layer
  std::vector<Index> ae_hidden = {1024, 256};  // encoder half; decoder is mirrored
  Index ae_bottleneck = 0;                // 0 = k
  std::vector<Index> gate_hidden = {512, 512};
  bool batch_norm = true;
  double lr = 1e-3;
  int gate_pretrain_epochs = 20;
  int kmeans_restarts = 10;

  Index bottleneck(Index k_) const { return ae_bottleneck > 0 ? ae_bottleneck : k_; }
};

// Seed stream ids so every phase draws from an independent generator.
namespace seed_stream {
constexpr std::uint64_t ae_init = 1;
constexpr std::uint64_t ae_train = 2;
constexpr std::uint64_t kmeans = 3;
constexpr std::uint64_t gate_init = 4;
constexpr std::uint64_t gate_train = 5;
constexpr std::uint64_t joint_shuffle = 6;
constexpr std::uint64_t expert_init = 100;   // + expert index
constexpr std::uint64_t expert_train = 200;  // + expert index
constexpr std::uint64_t expert_noise = 300;  // + expert index
}  // namespace seed_stream

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> nmi, ari, acc;
  std::optional<int> active_experts;
};

struct History {
  std::vector<EpochRecord> rows;
};

inline void write_history_csv(std::ostream& os, const History& h) {
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return std::string(buf);
  };
  for (const auto& r : h.rows) {
    os << r.epoch << "," << num(r.loss);
    if (r.nmi) os << "," << num(*r.nmi) << "," << num(*r.ari) << "," << num(*r.acc);
    if (r.active_experts) os << "," << *r.active_experts;
    os << "\n";
  }
}

inline Matrix gather_rows(const Matrix& X, const std::vector<Index>& idx, std::size_t begin,
                          std::size_t end) {
  Matrix out(static_cast<Index>(end - begin), X.cols());
  for (std::size_t i = begin; i < end; ++i) out.row(static_cast<Index>(i - begin)) = X.row(idx[i]);
  return out;
}

class EarlyStopper {
 public:
  explicit EarlyStopper(EarlyStopConfig cfg) : cfg_(cfg) {}

  // Feed the per-epoch loss; returns true once patience is exhausted.
  bool should_stop(double loss) {
    if (!std::isfinite(best_) ||
        best_ - loss >= cfg_.min_rel_improvement * std::max(std::abs(best_), 1e-12)) {
      best_ = loss;
      stale_ = 0;
      return false;
    }
    return ++stale_ >= cfg_.patience;
  }

 private:
  EarlyStopConfig cfg_;
  double best_ = std::numeric_limits<double>::infinity();
  int stale_ = 0;
};

// Reconstruction training with BCE; returns per-epoch mean losses.
inline std::vector<double> train_autoencoder_bce(MultiLayerNet& net, const Matrix& X,
                                                 int epochs, int batch_size, double lr,
                                                 const EarlyStopConfig& early, Rng& rng) {
  auto ps = params(net);
  AdamState opt = make_adam(ps, lr);
  const Index n = X.rows();
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::vector<double> losses;
  EarlyStopper stopper(early);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < idx.size(); b += static_cast<std::size_t>(batch_size)) {
      std::size_t e = std::min(idx.size(), b + static_cast<std::size_t>(batch_size));
      Matrix batch = gather_rows(X, idx, b, e);
      ForwardCache cache = forward(net, batch, Mode::train);
      auto [loss, dY] = bce_loss(cache.output(), batch);
      if (!std::isfinite(loss)) throw TrainingError("autoencoder training diverged");
      zero_grads(net);
      backward(net, cache, dY);
      adam_step(ps, opt);
      total += loss * static_cast<double>(e - b);
    }
    losses.push_back(total / static_cast<double>(n));
    if (stopper.should_stop(losses.back())) break;
  }
  return losses;
}

// Cross-entropy fit of the gate to fixed labels; returns eval-mode accuracy.
inline double train_gate_classifier(GateNetwork& gate, const Matrix& X, const Labels& labels,
                                    int epochs, int batch_size, double lr, Rng& rng) {
  auto ps = gate_params(gate);
  AdamState opt = make_adam(ps, lr);
  const Index n = X.rows();
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t b = 0; b < idx.size(); b += static_cast<std::size_t>(batch_size)) {
      std::size_t e = std::min(idx.size(), b + static_cast<std::size_t>(batch_size));
      Matrix batch = gather_rows(X, idx, b, e);
      Labels batch_labels(e - b);
      for (std::size_t i = b; i < e; ++i)
        batch_labels[i - b] = labels[static_cast<std::size_t>(idx[i])];
      GateCache cache = gate_forward_cached(gate, batch, Mode::train);
      auto [loss, dZ] = ce_with_logits(cache.logits, batch_labels);
      if (!std::isfinite(loss)) throw TrainingError("gate pretraining diverged");
      zero_grads(gate.body);
      gate.head.dW.setZero();
      gate.head.db.setZero();
      Matrix dH = affine_backward(gate.head, cache.H, dZ);
      backward(gate.body, cache.body, dH);
      adam_step(ps, opt);
    }
  }
  Labels pred = hard_assign(gate_predict(gate, X));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

struct InitReport {
  std::vector<double> ae_losses;       // global autoencoder BCE per epoch
  double kmeans_inertia = 0.0;
  std::vector<Index> shard_sizes;
  int empty_shards = 0;
  double gate_accuracy = 0.0;          // vs pseudo-labels; 0 when the gate is not trained
  std::vector<double> expert_final_loss;
};

struct PretrainResult {
  DamicModel model;
  Labels pseudo_labels;
  InitReport report;
};

inline DamicModel make_damic_model(Index d, Index k, const TrainConfig& cfg) {
  DamicModel m;
  m.d = d;
  m.k = k;
  Rng grng(mix_seed(cfg.seed, seed_stream::gate_init));
  m.gate = make_gate(d, cfg.gate_hidden, cfg.embedding_dim, k, cfg.batch_norm, grng);
  for (Index i = 0; i < k; ++i) {
    Rng erng(mix_seed(cfg.seed, seed_stream::expert_init + static_cast<std::uint64_t>(i)));
    m.bank.experts.push_back(
        make_autoencoder(d, cfg.ae_hidden, cfg.bottleneck(k), cfg.batch_norm, erng).net);
  }
  return m;
}

namespace detail {

inline void perturb_params(MultiLayerNet& net, double scale, Rng& rng) {
  std::normal_distribution<double> noise(0.0, scale);
  for (auto& p : params(net))
    for (Index i = 0; i < p.n; ++i) p.value[i] += noise(rng);
}

// Steps (a), (b), (d) of the initialization pipeline; (c), the gate fit, is optional
// so the gate-free variant can reuse the rest.
inline PretrainResult pretrain_impl(const Matrix& X, const TrainConfig& cfg, bool train_gate) {
  const Index n = X.rows();
  const Index d = X.cols();
  const Index k = cfg.k;
  if (n < k) throw InputError("pretrain: n=" + std::to_string(n) + " < k=" + std::to_string(k));

  PretrainResult out;
  out.model.d = d;
  out.model.k = k;

  // (a) one autoencoder on the whole dataset
  Rng ae_init(mix_seed(cfg.seed, seed_stream::ae_init));
  BuiltAutoencoder global = make_autoencoder(d, cfg.ae_hidden, cfg.bottleneck(k),
                                             cfg.batch_norm, ae_init);
  Rng ae_train(mix_seed(cfg.seed, seed_stream::ae_train));
  out.report.ae_losses = train_autoencoder_bce(global.net, X, cfg.epochs, cfg.batch_size,
                                               cfg.lr, cfg.early_stop, ae_train);

  // (b) k-means on the bottleneck activations
  Matrix embedding = forward_prefix(global.net, X, global.bottleneck_act);
  KmeansConfig kmcfg;
  kmcfg.restarts = cfg.kmeans_restarts;
  kmcfg.seed = mix_seed(cfg.seed, seed_stream::kmeans);
  KmeansResult km = kmeans_fit(embedding, k, kmcfg);
  out.pseudo_labels = km.labels;
  out.report.kmeans_inertia = km.inertia;

  // (c) gate as a pseudo-label classifier
  Rng gate_init(mix_seed(cfg.seed, seed_stream::gate_init));
  out.model.gate = make_gate(d, cfg.gate_hidden, cfg.embedding_dim, k, cfg.batch_norm, gate_init);
  if (train_gate) {
    Rng gate_train(mix_seed(cfg.seed, seed_stream::gate_train));
    out.report.gate_accuracy =
        train_gate_classifier(out.model.gate, X, out.pseudo_labels, cfg.gate_pretrain_epochs,
                              cfg.batch_size, cfg.lr, gate_train);
  }

  // (d) one expert per pseudo-cluster
  out.report.shard_sizes.assign(static_cast<std::size_t>(k), 0);
  for (int label : out.pseudo_labels) ++out.report.shard_sizes[static_cast<std::size_t>(label)];
  for (Index i = 0; i < k; ++i) {
    const Index shard_n = out.report.shard_sizes[static_cast<std::size_t>(i)];
    if (shard_n == 0) {
      // Keep the expert alive: clone the global autoencoder and nudge it.
      ++out.report.empty_shards;
      MultiLayerNet expert = global.net;
      Rng noise(mix_seed(cfg.seed, seed_stream::expert_noise + static_cast<std::uint64_t>(i)));
      perturb_params(expert, 1e-2, noise);
      out.model.bank.experts.push_back(std::move(expert));
      out.report.expert_final_loss.push_back(out.report.ae_losses.back());
      continue;
    }
    std::vector<Index> rows;
    rows.reserve(static_cast<std::size_t>(shard_n));
    for (Index t = 0; t < n; ++t)
      if (out.pseudo_labels[static_cast<std::size_t>(t)] == static_cast<int>(i)) rows.push_back(t);
    Matrix shard = gather_rows(X, rows, 0, rows.size());
    Rng einit(mix_seed(cfg.seed, seed_stream::expert_init + static_cast<std::uint64_t>(i)));
    BuiltAutoencoder expert = make_autoencoder(d, cfg.ae_hidden, cfg.bottleneck(k),
                                               cfg.batch_norm, einit);
    Rng etrain(mix_seed(cfg.seed, seed_stream::expert_train + static_cast<std::uint64_t>(i)));
    auto losses = train_autoencoder_bce(expert.net, shard, cfg.epochs, cfg.batch_size, cfg.lr,
                                        cfg.early_stop, etrain);
    out.model.bank.experts.push_back(std::move(expert.net));
    out.report.expert_final_loss.push_back(losses.back());
  }
  return out;
}

}  // namespace detail

// Initialization pipeline: global autoencoder -> k-means on its bottleneck ->
// gate fit to the pseudo-labels -> per-cluster expert training.
inline PretrainResult pretrain(const Matrix& X, const TrainConfig& cfg) {
  return detail::pretrain_impl(X, cfg, /*train_gate=*/true);
}

// One mixture-loss backward pass; fills model gradients, returns the batch loss (sum form).
inline double damic_joint_backward(DamicModel& model, const Matrix& batch, Mode mode) {
  zero_model_grads(model);
  GateCache gate = gate_forward_cached(model.gate, batch, mode);
  Reconstructions rec = reconstruct_all(model, batch, mode);
  double loss = damic_loss_terms(gate.logP, rec.D);
  SoftAssignment W = soft_assign_terms(gate.logP, rec.D);

  // Gate: per-sample logit gradient is P - W.
  Matrix dLogits = gate.P - W;
  Matrix dH = affine_backward(model.gate.head, gate.H, dLogits);
  backward(model.gate.body, gate.body, dH);

  // Experts: responsibility-weighted reconstruction adjoint.
  for (Index i = 0; i < model.bank.k(); ++i) {
    Matrix dXhat = (rec.xhat[static_cast<std::size_t>(i)] - batch).array().colwise() *
                   W.col(i).array();
    backward(model.bank.experts[static_cast<std::size_t>(i)], rec.caches[static_cast<std::size_t>(i)],
             dXhat);
  }
  return loss;
}

// Forward-only mixture loss; eval mode keeps it a pure function of the parameters.
inline double damic_joint_loss(DamicModel& model, const Matrix& X, Mode mode) {
  GateCache gate = gate_forward_cached(model.gate, X, mode);
  Reconstructions rec = reconstruct_all(model, X, mode);
  return damic_loss_terms(gate.logP, rec.D);
}

// One Adam update of the whole model on the batch; returns the batch loss.
inline double train_step(DamicModel& model, const Matrix& batch, AdamState& opt) {
  double loss = damic_joint_backward(model, batch, Mode::train);
  if (!std::isfinite(loss)) throw TrainingError("joint training diverged");
  auto ps = model_params(model);
  adam_step(ps, opt);
  return loss;
}

struct FitResult {
  DamicModel model;
  History history;
  Labels pseudo_labels;  // from initialization; empty for joint_only_random_init
  InitReport init;
};

namespace detail {

inline void append_metrics(EpochRecord& row, DamicModel& model, const Matrix& X,
                           const Labels& truth) {
  Labels pred = hard_assign(gate_predict(model.gate, X));
  row.nmi = nmi(truth, pred);
  row.ari = ari(truth, pred);
  row.acc = acc(truth, pred);
}

}  // namespace detail

// Shuffled mini-batch epochs of train_step on an initialized model.
// When labels are given, per-epoch NMI/ARI/ACC are logged alongside the loss.
inline History joint_train(DamicModel& model, const Matrix& X, const TrainConfig& cfg,
                           const Labels* labels = nullptr) {
  const Index n = X.rows();
  AdamState opt = make_adam(model_params(model), cfg.lr);
  Rng shuffle_rng(mix_seed(cfg.seed, seed_stream::joint_shuffle));
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  EarlyStopper stopper(cfg.early_stop);
  History history;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), shuffle_rng);
    double total = 0.0;
    for (std::size_t b = 0; b < idx.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t e = std::min(idx.size(), b + static_cast<std::size_t>(cfg.batch_size));
      Matrix batch = gather_rows(X, idx, b, e);
      total += train_step(model, batch, opt);
    }
    EpochRecord row;
    row.epoch = epoch;
    row.loss = total / static_cast<double>(n);
    if (labels) detail::append_metrics(row, model, X, *labels);
    history.rows.push_back(row);
    if (stopper.should_stop(row.loss)) break;
  }
  return history;
}

// Pretraining (unless disabled by mode) followed by joint training.
inline FitResult fit(const Matrix& X, const TrainConfig& cfg, const Labels* labels = nullptr) {
  if (cfg.mode == TrainMode::reconstruction_only)
    throw ConfigError("fit: reconstruction_only is handled by fit_reconstruction_only");
  if (X.rows() < cfg.k)
    throw InputError("fit: n=" + std::to_string(X.rows()) + " < k=" + std::to_string(cfg.k));

  FitResult out;
  if (cfg.mode == TrainMode::joint_only_random_init) {
    out.model = make_damic_model(X.cols(), cfg.k, cfg);
  } else {
    PretrainResult pre = detail::pretrain_impl(X, cfg, /*train_gate=*/true);
    out.model = std::move(pre.model);
    out.pseudo_labels = std::move(pre.pseudo_labels);
    out.init = std::move(pre.report);
  }
  if (cfg.mode == TrainMode::pretrain_only) return out;
  out.history = joint_train(out.model, X, cfg, labels);
  return out;
}

struct ReconstructionOnlyResult {
  DamicModel model;  // gate stays at its random initialization; only the bank trains
  Labels labels;     // min-reconstruction assignments of the final bank
  History history;   // loss plus per-epoch count of active experts
  Labels pseudo_labels;
  InitReport init;
};

// One hard-min batch update: forward every expert, assign each sample to its argmin
// expert, and push the reconstruction adjoint only through that expert. Returns the
// batch loss sum; `active` marks experts that received at least one sample.
inline double reconstruction_only_step(AutoencoderBank& bank, const Matrix& batch,
                                       const std::vector<ParamRef>& ps, AdamState& opt,
                                       std::vector<char>* active = nullptr) {
  const Index k = bank.k();
  double total = 0.0;
  std::vector<ForwardCache> caches;
  std::vector<Matrix> xhat;
  caches.reserve(static_cast<std::size_t>(k));
  xhat.reserve(static_cast<std::size_t>(k));
  Matrix D(batch.rows(), k);
  for (Index i = 0; i < k; ++i) {
    caches.push_back(forward(bank.experts[static_cast<std::size_t>(i)], batch, Mode::train));
    xhat.push_back(caches.back().output());
    D.col(i) = half_sq_distance(batch, xhat.back());
  }
  Labels batch_labels = assign_by_reconstruction(D);
  for (auto& expert : bank.experts) zero_grads(expert);
  for (Index i = 0; i < k; ++i) {
    Matrix dXhat = Matrix::Zero(batch.rows(), batch.cols());
    bool any = false;
    for (Index t = 0; t < batch.rows(); ++t) {
      if (batch_labels[static_cast<std::size_t>(t)] == static_cast<int>(i)) {
        dXhat.row(t) = xhat[static_cast<std::size_t>(i)].row(t) - batch.row(t);
        total += D(t, i);
        any = true;
      }
    }
    if (any && active) (*active)[static_cast<std::size_t>(i)] = 1;
    backward(bank.experts[static_cast<std::size_t>(i)], caches[static_cast<std::size_t>(i)],
             dXhat);
  }
  if (!std::isfinite(total)) throw TrainingError("reconstruction-only training diverged");
  adam_step(ps, opt);
  return total;
}

// Gate-free variant: minimize sum_t min_i D[t][i]; only the argmin expert of each
// sample receives gradient. Expert starvation is reported, never repaired.
inline ReconstructionOnlyResult fit_reconstruction_only(const Matrix& X, const TrainConfig& cfg) {
  if (X.rows() < cfg.k)
    throw InputError("fit_reconstruction_only: n=" + std::to_string(X.rows()) +
                     " < k=" + std::to_string(cfg.k));
  PretrainResult pre = detail::pretrain_impl(X, cfg, /*train_gate=*/false);

  ReconstructionOnlyResult out;
  out.pseudo_labels = std::move(pre.pseudo_labels);
  out.init = std::move(pre.report);
  out.model = std::move(pre.model);
  DamicModel& model = out.model;

  std::vector<ParamRef> ps;
  for (auto& expert : model.bank.experts) collect_params(expert, ps);
  AdamState opt = make_adam(ps, cfg.lr);
  Rng shuffle_rng(mix_seed(cfg.seed, seed_stream::joint_shuffle));
  const Index n = X.rows();
  const Index k = model.bank.k();
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  EarlyStopper stopper(cfg.early_stop);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), shuffle_rng);
    double total = 0.0;
    std::vector<char> active(static_cast<std::size_t>(k), 0);
    for (std::size_t b = 0; b < idx.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t e = std::min(idx.size(), b + static_cast<std::size_t>(cfg.batch_size));
      Matrix batch = gather_rows(X, idx, b, e);
      total += reconstruction_only_step(model.bank, batch, ps, opt, &active);
    }
    EpochRecord row;
    row.epoch = epoch;
    row.loss = total / static_cast<double>(n);
    row.active_experts = static_cast<int>(std::count(active.begin(), active.end(), 1));
    out.history.rows.push_back(row);
    if (stopper.should_stop(row.loss)) break;
  }
  out.labels = assign_by_reconstruction(reconstruct_errors(model, X));
  return out;
}

}  // namespace damic
