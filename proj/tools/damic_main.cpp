#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "damic/damic.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitTraining = 4;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> out;
  bool force = false;
};

damic::RunConfig resolve_config(const std::string& config_path, const Overrides& ov) {
  damic::RunConfig cfg = damic::load_run_config(config_path);
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.mode) cfg.mode = *ov.mode;
  if (ov.out) cfg.out = *ov.out;
  damic::parse_mode(cfg.mode);  // validate early
  return cfg;
}

void prepare_out_dir(const std::string& out, bool force) {
  if (out.empty())
    throw damic::ConfigError("output directory required (config key 'out' or --out)");
  fs::path p(out);
  std::error_code ec;
  if (fs::exists(p, ec)) {
    if (!fs::is_directory(p, ec)) throw damic::IoError(out + " exists and is not a directory");
    if (!fs::is_empty(p, ec) && !force)
      throw damic::IoError(out + " is not empty (pass --force to reuse it)");
  } else if (!fs::create_directories(p, ec)) {
    throw damic::IoError("cannot create output directory " + out + ": " + ec.message());
  }
}

void echo_config(const damic::RunConfig& cfg) {
  std::ofstream os(fs::path(cfg.out) / "config.txt");
  if (!os) throw damic::IoError("cannot write config echo in " + cfg.out);
  damic::write_config_echo(os, cfg);
}

damic::SyntheticData build_synthetic(const damic::RunConfig& cfg) {
  return damic::gen_synthetic(damic::to_synthetic_spec(cfg));
}

damic::Dataset load_dataset_from(const damic::RunConfig& cfg) {
  damic::Dataset ds;
  if (cfg.dataset == "synthetic") {
    ds = build_synthetic(cfg).data;
  } else if (cfg.dataset == "idx") {
    if (cfg.images_path.empty() || cfg.labels_path.empty())
      throw damic::ConfigError("dataset=idx requires images_path and labels_path");
    ds = damic::load_idx(cfg.images_path, cfg.labels_path);
  } else if (cfg.dataset == "csv") {
    if (cfg.csv_path.empty()) throw damic::ConfigError("dataset=csv requires csv_path");
    ds = damic::load_dense_csv(cfg.csv_path, cfg.csv_has_labels);
  } else if (cfg.dataset == "triplets") {
    if (cfg.triplets_path.empty() || cfg.triplets_rows < 1 || cfg.triplets_cols < 1)
      throw damic::ConfigError(
          "dataset=triplets requires triplets_path, triplets_rows and triplets_cols");
    ds = damic::load_sparse_triplets(cfg.triplets_path, cfg.triplets_rows, cfg.triplets_cols);
    if (!cfg.triplets_labels_path.empty()) {
      damic::Labels labels = damic::load_labels_file(cfg.triplets_labels_path);
      if (static_cast<damic::Index>(labels.size()) != ds.X.rows())
        throw damic::FormatError("triplets_labels_path: " + std::to_string(labels.size()) +
                                 " labels for " + std::to_string(ds.X.rows()) + " rows");
      ds.labels = std::move(labels);
    }
  } else if (cfg.dataset == "container") {
    if (cfg.dataset_path.empty()) throw damic::ConfigError("dataset=container requires dataset_path");
    ds = damic::load_dataset(cfg.dataset_path);
  } else {
    throw damic::ConfigError("dataset: expected synthetic | idx | csv | triplets | container, got '" +
                             cfg.dataset + "'");
  }
  if (!cfg.name.empty()) ds.name = cfg.name;
  return ds;
}

void write_metrics_file(const std::string& path,
                        const std::vector<std::pair<std::string, double>>& entries) {
  std::ofstream os(path);
  if (!os) throw damic::IoError("cannot open for writing: " + path);
  damic::write_metrics_record(os, entries);
}

int count_empty_clusters(const damic::Labels& labels, damic::Index k) {
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (int lab : labels) ++counts[static_cast<std::size_t>(lab)];
  int empty = 0;
  for (int c : counts)
    if (c == 0) ++empty;
  return empty;
}

int cmd_generate(const damic::RunConfig& cfg, bool force) {
  if (cfg.dataset != "synthetic")
    throw damic::ConfigError("generate supports dataset=synthetic only");
  damic::SyntheticData synth = build_synthetic(cfg);
  prepare_out_dir(cfg.out, force);
  echo_config(cfg);
  damic::save_dataset((fs::path(cfg.out) / "dataset.bin").string(), synth.data);
  damic::save_csv_matrix((fs::path(cfg.out) / "latent.csv").string(), synth.latent);
  std::cout << "generated " << synth.data.X.rows() << "x" << synth.data.X.cols()
            << " dataset in " << cfg.out << "\n";
  return kExitOk;
}

int cmd_train(const damic::RunConfig& cfg, bool force) {
  damic::Dataset ds = load_dataset_from(cfg);
  damic::TrainConfig tc = damic::to_train_config(cfg);
  prepare_out_dir(cfg.out, force);
  echo_config(cfg);

  const damic::Labels* truth = ds.labels ? &*ds.labels : nullptr;
  damic::DamicModel model;
  damic::History history;
  damic::Labels labels;
  damic::Matrix P, H;

  if (tc.mode == damic::TrainMode::reconstruction_only) {
    damic::ReconstructionOnlyResult res = damic::fit_reconstruction_only(ds.X, tc);
    model = std::move(res.model);
    history = std::move(res.history);
    labels = std::move(res.labels);
    // No trained gate in this variant: export uniform-prior responsibilities.
    P = damic::softmax_rows(-damic::reconstruct_errors(model, ds.X));
    H.resize(ds.X.rows(), 0);
  } else {
    damic::FitResult res = damic::fit(ds.X, tc, truth);
    model = std::move(res.model);
    history = std::move(res.history);
    auto [embedding, probs] = damic::gate_forward(model, ds.X);
    H = std::move(embedding);
    P = std::move(probs);
    labels = damic::hard_assign(P);
  }

  damic::save_model((fs::path(cfg.out) / "model.bin").string(), model);
  {
    std::ofstream os(fs::path(cfg.out) / "history.csv");
    if (!os) throw damic::IoError("cannot write history.csv in " + cfg.out);
    damic::write_history_csv(os, history);
  }
  damic::save_assignments((fs::path(cfg.out) / "assignments.csv").string(), labels, P, H);
  if (truth) {
    write_metrics_file((fs::path(cfg.out) / "metrics.txt").string(),
                       {{"nmi", damic::nmi(*truth, labels)},
                        {"ari", damic::ari(*truth, labels)},
                        {"acc", damic::acc(*truth, labels)}});
  }
  std::cout << "trained mode=" << cfg.mode << " on " << ds.name << " (" << ds.X.rows() << "x"
            << ds.X.cols() << "), outputs in " << cfg.out << "\n";
  return kExitOk;
}

int cmd_evaluate(const damic::RunConfig& cfg) {
  if (cfg.model_path.empty()) throw damic::ConfigError("evaluate requires model_path");
  damic::Dataset ds = load_dataset_from(cfg);
  if (!ds.labels) throw damic::ConfigError("evaluate requires a dataset with labels");
  damic::DamicModel model = damic::load_model(cfg.model_path);
  if (model.d != ds.X.cols())
    throw damic::ConfigError("model expects d=" + std::to_string(model.d) + ", dataset has d=" +
                             std::to_string(ds.X.cols()));

  auto [H, P] = damic::gate_forward(model, ds.X);
  damic::Labels gate_labels = damic::hard_assign(P);
  damic::Matrix D = damic::reconstruct_errors(model, ds.X);
  damic::Labels recon_labels = damic::assign_by_reconstruction(D);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < gate_labels.size(); ++i)
    if (gate_labels[i] == recon_labels[i]) ++agree;

  const damic::Labels& truth = *ds.labels;
  std::vector<std::pair<std::string, double>> entries = {
      {"nmi_gate", damic::nmi(truth, gate_labels)},
      {"ari_gate", damic::ari(truth, gate_labels)},
      {"acc_gate", damic::acc(truth, gate_labels)},
      {"nmi_recon", damic::nmi(truth, recon_labels)},
      {"ari_recon", damic::ari(truth, recon_labels)},
      {"acc_recon", damic::acc(truth, recon_labels)},
      {"agreement", static_cast<double>(agree) / static_cast<double>(gate_labels.size())},
  };
  damic::write_metrics_record(std::cout, entries);
  if (!cfg.out.empty()) {
    fs::create_directories(cfg.out);
    write_metrics_file((fs::path(cfg.out) / "metrics.txt").string(), entries);
  }
  return kExitOk;
}

struct MethodStats {
  double nmi = 0, ari = 0, acc = 0;
  int empty_clusters = 0;
};

int cmd_ablation(const damic::RunConfig& cfg, bool force) {
  damic::Dataset ds = load_dataset_from(cfg);
  if (!ds.labels) throw damic::ConfigError("ablation requires a dataset with labels");
  if (cfg.ablation_seeds < 1) throw damic::ConfigError("ablation_seeds must be >= 1");
  damic::TrainConfig base = damic::to_train_config(cfg);
  prepare_out_dir(cfg.out, force);
  echo_config(cfg);

  const damic::Labels& truth = *ds.labels;
  const char* methods[] = {"full", "pretrain_only", "joint_only_random_init", "kmeans"};
  std::vector<MethodStats> stats(4);

  auto add = [&](int m, const damic::Labels& pred) {
    stats[static_cast<std::size_t>(m)].nmi += damic::nmi(truth, pred);
    stats[static_cast<std::size_t>(m)].ari += damic::ari(truth, pred);
    stats[static_cast<std::size_t>(m)].acc += damic::acc(truth, pred);
    stats[static_cast<std::size_t>(m)].empty_clusters += count_empty_clusters(pred, base.k);
  };

  for (int s = 0; s < cfg.ablation_seeds; ++s) {
    damic::TrainConfig tc = base;
    tc.seed = cfg.seed + static_cast<std::uint64_t>(s);

    // Pretrain once; the full run continues from a copy of the initialized model.
    damic::PretrainResult pre = damic::pretrain(ds.X, tc);
    add(1, damic::hard_assign(damic::gate_predict(pre.model.gate, ds.X)));

    damic::DamicModel full_model = pre.model;
    damic::joint_train(full_model, ds.X, tc);
    add(0, damic::hard_assign(damic::gate_predict(full_model.gate, ds.X)));

    damic::TrainConfig joint_cfg = tc;
    joint_cfg.mode = damic::TrainMode::joint_only_random_init;
    damic::FitResult joint = damic::fit(ds.X, joint_cfg);
    add(2, damic::hard_assign(damic::gate_predict(joint.model.gate, ds.X)));

    damic::KmeansConfig km;
    km.restarts = tc.kmeans_restarts;
    km.seed = damic::mix_seed(tc.seed, damic::seed_stream::kmeans);
    add(3, damic::kmeans_fit(ds.X, base.k, km).labels);
  }

  std::ofstream os(fs::path(cfg.out) / "ablation.txt");
  if (!os) throw damic::IoError("cannot write ablation.txt in " + cfg.out);
  const double denom = static_cast<double>(cfg.ablation_seeds);
  char buf[160];
  std::string report = "method,nmi,ari,acc,empty_clusters\n";
  for (int m = 0; m < 4; ++m) {
    const auto& st = stats[static_cast<std::size_t>(m)];
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%d\n", methods[m], st.nmi / denom,
                  st.ari / denom, st.acc / denom, st.empty_clusters);
    report += buf;
  }
  os << report;
  std::cout << report;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixture-of-autoencoders deep clustering toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;
  std::uint64_t seed_value = 0;
  std::string mode_value, out_value;

  auto add_common = [&](CLI::App* sub, bool with_mode) {
    sub->add_option("--config", config_path, "path to a key = value config file")->required();
    sub->add_option("--seed", seed_value, "override the config seed");
    sub->add_option("--out", out_value, "override the output directory");
    sub->add_flag("--force", ov.force, "allow writing into a non-empty output directory");
    if (with_mode)
      sub->add_option("--mode", mode_value,
                      "full | pretrain_only | joint_only_random_init | reconstruction_only");
  };

  CLI::App* generate = app.add_subcommand("generate", "write a synthetic dataset");
  add_common(generate, false);
  CLI::App* pretrain = app.add_subcommand("pretrain", "run the initialization pipeline only");
  add_common(pretrain, false);
  CLI::App* train = app.add_subcommand("train", "train a clustering model");
  add_common(train, true);
  CLI::App* evaluate = app.add_subcommand("evaluate", "score a saved model on labeled data");
  add_common(evaluate, false);
  CLI::App* ablation = app.add_subcommand("ablation", "compare training variants");
  add_common(ablation, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << e.what() << "\n";
    return kExitConfig;
  }

  for (CLI::App* sub : app.get_subcommands()) {
    if (sub->count("--seed")) ov.seed = seed_value;
    if (sub->count("--out")) ov.out = out_value;
    if (sub->count("--mode")) ov.mode = mode_value;
  }

  try {
    damic::RunConfig cfg = resolve_config(config_path, ov);
    if (generate->parsed()) return cmd_generate(cfg, ov.force);
    if (pretrain->parsed()) {
      cfg.mode = "pretrain_only";
      return cmd_train(cfg, ov.force);
    }
    if (train->parsed()) return cmd_train(cfg, ov.force);
    if (evaluate->parsed()) return cmd_evaluate(cfg);
    if (ablation->parsed()) return cmd_ablation(cfg, ov.force);
    return kExitConfig;
  } catch (const damic::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const damic::InputError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const damic::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const damic::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitIo;
  } catch (const damic::TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return kExitTraining;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
