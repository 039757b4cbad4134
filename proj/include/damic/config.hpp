#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "damic/core.hpp"
#include "damic/data.hpp"
#include "damic/train.hpp"

namespace damic {

// Declarative run description; every field has a default so a config file only
// states what differs. Unknown keys are rejected.
struct RunConfig {
  // dataset source
  std::string dataset = "synthetic";  // synthetic | idx | csv | triplets | container
  std::string images_path, labels_path;
  std::string csv_path;
  bool csv_has_labels = false;
  std::string triplets_path, triplets_labels_path;
  Index triplets_rows = 0, triplets_cols = 0;
  std::string dataset_path;
  std::string name;

  // synthetic generator
  Index n_per_cluster = 1000;
  double sigma = 0.7;
  Index obs_dim = 100;
  std::string means = "3,3;3,-3;-3,3;-3,-3";
  std::uint64_t w_seed = 0;      // 0 = derive from seed
  std::uint64_t noise_seed = 0;  // 0 = derive from seed

  // model / training
  Index k = 4;
  int epochs = 50;
  int batch_size = 256;
  std::uint64_t seed = 1;
  std::string mode = "full";
  Index embedding_dim = 512;
  std::string ae_hidden = "1024,256";
  Index ae_bottleneck = 0;
  std::string gate_hidden = "512,512";
  bool batch_norm = true;
  double lr = 1e-3;
  int gate_pretrain_epochs = 20;
  int kmeans_restarts = 10;
  int early_stop_patience = 5;
  double early_stop_min_rel_improvement = 1e-4;

  // run
  std::string out;
  std::string model_path;
  int ablation_seeds = 3;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

inline long long parse_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    long long out = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

inline double parse_real(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

inline std::vector<Index> parse_index_list(const std::string& v, const std::string& key) {
  std::vector<Index> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    long long n = parse_int(trim(item), key);
    if (n < 1) throw ConfigError(key + ": sizes must be positive");
    out.push_back(static_cast<Index>(n));
  }
  return out;
}

}  // namespace detail

inline std::vector<std::pair<std::string, std::string>> parse_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    out.emplace_back(detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
  }
  return out;
}

inline void apply_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_int;
  using detail::parse_real;
  if (key == "dataset") cfg.dataset = value;
  else if (key == "images_path") cfg.images_path = value;
  else if (key == "labels_path") cfg.labels_path = value;
  else if (key == "csv_path") cfg.csv_path = value;
  else if (key == "csv_has_labels") cfg.csv_has_labels = parse_bool(value, key);
  else if (key == "triplets_path") cfg.triplets_path = value;
  else if (key == "triplets_labels_path") cfg.triplets_labels_path = value;
  else if (key == "triplets_rows") cfg.triplets_rows = static_cast<Index>(parse_int(value, key));
  else if (key == "triplets_cols") cfg.triplets_cols = static_cast<Index>(parse_int(value, key));
  else if (key == "dataset_path") cfg.dataset_path = value;
  else if (key == "name") cfg.name = value;
  else if (key == "n_per_cluster") cfg.n_per_cluster = static_cast<Index>(parse_int(value, key));
  else if (key == "sigma") cfg.sigma = parse_real(value, key);
  else if (key == "obs_dim") cfg.obs_dim = static_cast<Index>(parse_int(value, key));
  else if (key == "means") cfg.means = value;
  else if (key == "w_seed") cfg.w_seed = static_cast<std::uint64_t>(parse_int(value, key));
  else if (key == "noise_seed") cfg.noise_seed = static_cast<std::uint64_t>(parse_int(value, key));
  else if (key == "k") cfg.k = static_cast<Index>(parse_int(value, key));
  else if (key == "epochs") cfg.epochs = static_cast<int>(parse_int(value, key));
  else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_int(value, key));
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(value, key));
  else if (key == "mode") cfg.mode = value;
  else if (key == "embedding_dim") cfg.embedding_dim = static_cast<Index>(parse_int(value, key));
  else if (key == "ae_hidden") cfg.ae_hidden = value;
  else if (key == "ae_bottleneck") cfg.ae_bottleneck = static_cast<Index>(parse_int(value, key));
  else if (key == "gate_hidden") cfg.gate_hidden = value;
  else if (key == "batch_norm") cfg.batch_norm = parse_bool(value, key);
  else if (key == "lr") cfg.lr = parse_real(value, key);
  else if (key == "gate_pretrain_epochs") cfg.gate_pretrain_epochs = static_cast<int>(parse_int(value, key));
  else if (key == "kmeans_restarts") cfg.kmeans_restarts = static_cast<int>(parse_int(value, key));
  else if (key == "early_stop_patience") cfg.early_stop_patience = static_cast<int>(parse_int(value, key));
  else if (key == "early_stop_min_rel_improvement") cfg.early_stop_min_rel_improvement = parse_real(value, key);
  else if (key == "out") cfg.out = value;
  else if (key == "model_path") cfg.model_path = value;
  else if (key == "ablation_seeds") cfg.ablation_seeds = static_cast<int>(parse_int(value, key));
  else throw ConfigError("unknown config key '" + key + "'");
}

inline RunConfig load_run_config(const std::string& path) {
  RunConfig cfg;
  for (const auto& [key, value] : parse_kv_file(path)) apply_key(cfg, key, value);
  return cfg;
}

inline TrainMode parse_mode(const std::string& mode) {
  if (mode == "full") return TrainMode::full;
  if (mode == "pretrain_only") return TrainMode::pretrain_only;
  if (mode == "joint_only_random_init") return TrainMode::joint_only_random_init;
  if (mode == "reconstruction_only") return TrainMode::reconstruction_only;
  throw ConfigError("mode: expected full | pretrain_only | joint_only_random_init | "
                    "reconstruction_only, got '" + mode + "'");
}

inline TrainConfig to_train_config(const RunConfig& cfg) {
  TrainConfig tc;
  if (cfg.k < 1) throw ConfigError("k must be >= 1");
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  tc.k = cfg.k;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.seed = cfg.seed;
  tc.early_stop.patience = cfg.early_stop_patience;
  tc.early_stop.min_rel_improvement = cfg.early_stop_min_rel_improvement;
  tc.mode = parse_mode(cfg.mode);
  tc.embedding_dim = cfg.embedding_dim;
  tc.ae_hidden = detail::parse_index_list(cfg.ae_hidden, "ae_hidden");
  tc.ae_bottleneck = cfg.ae_bottleneck;
  tc.gate_hidden = detail::parse_index_list(cfg.gate_hidden, "gate_hidden");
  tc.batch_norm = cfg.batch_norm;
  tc.lr = cfg.lr;
  tc.gate_pretrain_epochs = cfg.gate_pretrain_epochs;
  tc.kmeans_restarts = cfg.kmeans_restarts;
  return tc;
}

inline SyntheticSpec to_synthetic_spec(const RunConfig& cfg) {
  SyntheticSpec spec;
  spec.n_per_cluster = cfg.n_per_cluster;
  spec.sigma = cfg.sigma;
  spec.obs_dim = cfg.obs_dim;
  spec.w_seed = cfg.w_seed != 0 ? cfg.w_seed : mix_seed(cfg.seed, 900);
  spec.noise_seed = cfg.noise_seed != 0 ? cfg.noise_seed : mix_seed(cfg.seed, 901);

  auto groups = detail::split(cfg.means, ';');
  if (groups.size() != spec.means.size())
    throw ConfigError("means: expected 4 semicolon-separated x,y pairs");
  for (std::size_t i = 0; i < groups.size(); ++i) {
    auto xy = detail::split(groups[i], ',');
    if (xy.size() != 2) throw ConfigError("means: expected 4 semicolon-separated x,y pairs");
    spec.means[i][0] = detail::parse_real(detail::trim(xy[0]), "means");
    spec.means[i][1] = detail::parse_real(detail::trim(xy[1]), "means");
  }
  return spec;
}

// Canonical echo of the fully resolved configuration.
inline void write_config_echo(std::ostream& os, const RunConfig& cfg) {
  os << "dataset = " << cfg.dataset << "\n";
  os << "images_path = " << cfg.images_path << "\n";
  os << "labels_path = " << cfg.labels_path << "\n";
  os << "csv_path = " << cfg.csv_path << "\n";
  os << "csv_has_labels = " << (cfg.csv_has_labels ? "true" : "false") << "\n";
  os << "triplets_path = " << cfg.triplets_path << "\n";
  os << "triplets_labels_path = " << cfg.triplets_labels_path << "\n";
  os << "triplets_rows = " << cfg.triplets_rows << "\n";
  os << "triplets_cols = " << cfg.triplets_cols << "\n";
  os << "dataset_path = " << cfg.dataset_path << "\n";
  os << "name = " << cfg.name << "\n";
  os << "n_per_cluster = " << cfg.n_per_cluster << "\n";
  os << "sigma = " << cfg.sigma << "\n";
  os << "obs_dim = " << cfg.obs_dim << "\n";
  os << "means = " << cfg.means << "\n";
  os << "w_seed = " << cfg.w_seed << "\n";
  os << "noise_seed = " << cfg.noise_seed << "\n";
  os << "k = " << cfg.k << "\n";
  os << "epochs = " << cfg.epochs << "\n";
  os << "batch_size = " << cfg.batch_size << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "mode = " << cfg.mode << "\n";
  os << "embedding_dim = " << cfg.embedding_dim << "\n";
  os << "ae_hidden = " << cfg.ae_hidden << "\n";
  os << "ae_bottleneck = " << cfg.ae_bottleneck << "\n";
  os << "gate_hidden = " << cfg.gate_hidden << "\n";
  os << "batch_norm = " << (cfg.batch_norm ? "true" : "false") << "\n";
  os << "lr = " << cfg.lr << "\n";
  os << "gate_pretrain_epochs = " << cfg.gate_pretrain_epochs << "\n";
  os << "kmeans_restarts = " << cfg.kmeans_restarts << "\n";
  os << "early_stop_patience = " << cfg.early_stop_patience << "\n";
  os << "early_stop_min_rel_improvement = " << cfg.early_stop_min_rel_improvement << "\n";
  os << "out = " << cfg.out << "\n";
  os << "model_path = " << cfg.model_path << "\n";
  os << "ablation_seeds = " << cfg.ablation_seeds << "\n";
}

}  // namespace damic
