#pragma once

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "damic/activations.hpp"
#include "damic/core.hpp"
#include "damic/serialize.hpp"

namespace damic {

struct Dataset {
  Matrix X;
  std::optional<Labels> labels;
  std::string name;
  // Per-feature normalization record; empty when a global scale (or none) was applied.
  RowVec feat_min, feat_max;
};

struct SyntheticSpec {
  Index n_per_cluster = 1000;
  std::array<std::array<double, 2>, 4> means = {{{3, 3}, {3, -3}, {-3, 3}, {-3, -3}}};
  double sigma = 0.7;
  Index obs_dim = 100;
  std::uint64_t w_seed = 7;
  std::uint64_t noise_seed = 42;
};

struct SyntheticData {
  Dataset data;
  Matrix latent;  // n x 2 ground-truth points
};

// Four 2-D Gaussians pushed through a fixed random lift: x = (sigmoid(W v))^2.
inline SyntheticData gen_synthetic(const SyntheticSpec& spec) {
  if (spec.obs_dim < 2) throw InputError("gen_synthetic: obs_dim must be >= 2");
  if (!(spec.sigma > 0.0)) throw InputError("gen_synthetic: sigma must be > 0");
  if (spec.n_per_cluster < 1) throw InputError("gen_synthetic: n_per_cluster must be >= 1");

  Matrix W(spec.obs_dim, 2);
  {
    Rng rng(spec.w_seed);
    std::normal_distribution<double> stdnorm(0.0, 1.0);
    for (Index i = 0; i < W.size(); ++i) W.data()[i] = stdnorm(rng);
  }

  const Index n = 4 * spec.n_per_cluster;
  SyntheticData out;
  out.latent.resize(n, 2);
  out.data.X.resize(n, spec.obs_dim);
  out.data.labels = Labels(static_cast<std::size_t>(n));
  out.data.name = "synthetic";

  Rng rng(spec.noise_seed);
  std::normal_distribution<double> stdnorm(0.0, 1.0);
  Index t = 0;
  for (int c = 0; c < 4; ++c) {
    for (Index j = 0; j < spec.n_per_cluster; ++j, ++t) {
      double v0 = spec.means[static_cast<std::size_t>(c)][0] + spec.sigma * stdnorm(rng);
      double v1 = spec.means[static_cast<std::size_t>(c)][1] + spec.sigma * stdnorm(rng);
      out.latent(t, 0) = v0;
      out.latent(t, 1) = v1;
      for (Index f = 0; f < spec.obs_dim; ++f) {
        double s = sigmoid(W(f, 0) * v0 + W(f, 1) * v1);
        out.data.X(t, f) = s * s;
      }
      (*out.data.labels)[static_cast<std::size_t>(t)] = c;
    }
  }
  return out;
}

namespace detail {

inline std::uint32_t read_be_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError(path + ": truncated header");
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

}  // namespace detail

// IDX image/label pair (big-endian headers); pixels scaled by 1/255.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw IoError("cannot open: " + images_path);
  if (detail::read_be_u32(imgs, images_path) != 0x00000803u)
    throw FormatError(images_path + ": bad magic, expected idx3 image file");
  const std::uint32_t n = detail::read_be_u32(imgs, images_path);
  const std::uint32_t rows = detail::read_be_u32(imgs, images_path);
  const std::uint32_t cols = detail::read_be_u32(imgs, images_path);

  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw IoError("cannot open: " + labels_path);
  if (detail::read_be_u32(labs, labels_path) != 0x00000801u)
    throw FormatError(labels_path + ": bad magic, expected idx1 label file");
  const std::uint32_t n_labels = detail::read_be_u32(labs, labels_path);
  if (n != n_labels)
    throw FormatError("idx pair: " + std::to_string(n) + " images vs " +
                      std::to_string(n_labels) + " labels");

  const std::size_t dim = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> pixel_buf(dim);
  Dataset ds;
  ds.name = "idx";
  ds.X.resize(static_cast<Index>(n), static_cast<Index>(dim));
  ds.labels = Labels(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!imgs.read(reinterpret_cast<char*>(pixel_buf.data()), static_cast<std::streamsize>(dim)))
      throw FormatError(images_path + ": truncated image payload");
    for (std::size_t p = 0; p < dim; ++p)
      ds.X(static_cast<Index>(i), static_cast<Index>(p)) = pixel_buf[p] / 255.0;
    int lab = labs.get();
    if (lab == EOF) throw FormatError(labels_path + ": truncated label payload");
    (*ds.labels)[i] = lab;
  }
  return ds;
}

namespace detail {

inline double parse_double(const std::string& token, const std::string& where) {
  const char* begin = token.data();
  const char* end = begin + token.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\t' || *(end - 1) == '\r')) --end;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) throw FormatError(where + ": bad number '" + token + "'");
  return value;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

// Raw comma-separated matrix, no normalization. Blank lines are skipped.
inline Matrix read_csv_matrix(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto tokens = detail::split(line, ',');
    std::vector<double> row;
    row.reserve(tokens.size());
    for (const auto& tok : tokens)
      row.push_back(detail::parse_double(tok, path + ":" + std::to_string(lineno)));
    if (!rows.empty() && row.size() != rows.front().size())
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(rows.front().size()) + " fields, got " +
                        std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(path + ": empty file");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows.front().size(); ++c)
      m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return m;
}

// Round-trippable precision (%.17g).
inline void save_csv_matrix(const std::string& path, const Matrix& m) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  char buf[40];
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
      os << (c ? "," : "") << buf;
    }
    os << "\n";
  }
  if (!os) throw IoError("write failed: " + path);
}

// Min-max per feature onto [0,1]; constant features map to 0.
inline void minmax_normalize(Dataset& ds) {
  ds.feat_min = ds.X.colwise().minCoeff();
  ds.feat_max = ds.X.colwise().maxCoeff();
  for (Index c = 0; c < ds.X.cols(); ++c) {
    double range = ds.feat_max[c] - ds.feat_min[c];
    if (range > 0.0)
      ds.X.col(c) = (ds.X.col(c).array() - ds.feat_min[c]) / range;
    else
      ds.X.col(c).setZero();
  }
}

// Dense numeric records; when has_labels, the last column is an integer class id.
inline Dataset load_dense_csv(const std::string& path, bool has_labels) {
  Matrix raw = read_csv_matrix(path);
  Dataset ds;
  ds.name = "csv";
  if (has_labels) {
    if (raw.cols() < 2) throw FormatError(path + ": label column requires >= 2 columns");
    ds.labels = Labels(static_cast<std::size_t>(raw.rows()));
    for (Index r = 0; r < raw.rows(); ++r) {
      double v = raw(r, raw.cols() - 1);
      int lab = static_cast<int>(v);
      if (static_cast<double>(lab) != v || lab < 0)
        throw FormatError(path + ":" + std::to_string(r + 1) +
                          ": label must be a non-negative integer");
      (*ds.labels)[static_cast<std::size_t>(r)] = lab;
    }
    ds.X = raw.leftCols(raw.cols() - 1);
  } else {
    ds.X = std::move(raw);
  }
  minmax_normalize(ds);
  return ds;
}

// (row, col, value) text triplets into a dense matrix; duplicate cells are summed.
inline Dataset load_sparse_triplets(const std::string& path, Index n_rows, Index n_cols) {
  if (n_rows < 1 || n_cols < 1) throw InputError("load_sparse_triplets: dims must be positive");
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  Dataset ds;
  ds.name = "triplets";
  ds.X = Matrix::Zero(n_rows, n_cols);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto tokens = detail::split(line, ',');
    const std::string where = path + ":" + std::to_string(lineno);
    if (tokens.size() != 3) throw FormatError(where + ": expected row,col,value");
    double rd = detail::parse_double(tokens[0], where);
    double cd = detail::parse_double(tokens[1], where);
    double v = detail::parse_double(tokens[2], where);
    Index r = static_cast<Index>(rd);
    Index c = static_cast<Index>(cd);
    if (static_cast<double>(r) != rd || static_cast<double>(c) != cd)
      throw FormatError(where + ": indices must be integers");
    if (r < 0 || r >= n_rows || c < 0 || c >= n_cols)
      throw FormatError(where + ": index (" + std::to_string(r) + "," + std::to_string(c) +
                        ") out of range for " + std::to_string(n_rows) + "x" +
                        std::to_string(n_cols));
    ds.X(r, c) += v;
  }
  minmax_normalize(ds);
  return ds;
}

// One integer class id per line.
inline Labels load_labels_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  Labels labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    double v = detail::parse_double(line, path + ":" + std::to_string(lineno));
    int lab = static_cast<int>(v);
    if (static_cast<double>(lab) != v || lab < 0)
      throw FormatError(path + ":" + std::to_string(lineno) + ": bad label");
    labels.push_back(lab);
  }
  return labels;
}

// Per point: index, hard label, k gate probabilities, embedding coordinates.
inline void save_assignments(const std::string& path, const Labels& labels, const Matrix& P,
                             const Matrix& H) {
  if (static_cast<Index>(labels.size()) != P.rows() || P.rows() != H.rows())
    throw InputError("save_assignments: inconsistent lengths");
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << "," << buf;
  };
  for (Index t = 0; t < P.rows(); ++t) {
    os << t << "," << labels[static_cast<std::size_t>(t)];
    for (Index i = 0; i < P.cols(); ++i) put(P(t, i));
    for (Index i = 0; i < H.cols(); ++i) put(H(t, i));
    os << "\n";
  }
  if (!os) throw IoError("write failed: " + path);
}

constexpr char kDatasetMagic[9] = "DMCDAT01";

inline void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  bin::write_magic(os, kDatasetMagic);
  bin::write_u32(os, 1);  // version
  bin::write_u64(os, static_cast<std::uint64_t>(ds.X.rows()));
  bin::write_u64(os, static_cast<std::uint64_t>(ds.X.cols()));
  bin::write_u8(os, ds.labels ? 1 : 0);
  bin::write_u8(os, ds.feat_min.size() > 0 ? 1 : 0);
  bin::write_u32(os, static_cast<std::uint32_t>(ds.name.size()));
  os.write(ds.name.data(), static_cast<std::streamsize>(ds.name.size()));
  bin::write_f64_block(os, ds.X.data(), ds.X.size());
  if (ds.labels)
    for (int lab : *ds.labels) bin::write_u32(os, static_cast<std::uint32_t>(lab));
  if (ds.feat_min.size() > 0) {
    bin::write_f64_block(os, ds.feat_min.data(), ds.feat_min.size());
    bin::write_f64_block(os, ds.feat_max.data(), ds.feat_max.size());
  }
  if (!os) throw IoError("write failed: " + path);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  bin::expect_magic(is, kDatasetMagic, "dataset container");
  if (bin::read_u32(is) != 1) throw FormatError("dataset container: unsupported version");
  const Index n = static_cast<Index>(bin::read_u64(is));
  const Index d = static_cast<Index>(bin::read_u64(is));
  const bool has_labels = bin::read_u8(is) != 0;
  const bool has_range = bin::read_u8(is) != 0;
  const std::uint32_t name_len = bin::read_u32(is);
  Dataset ds;
  ds.name.resize(name_len);
  if (name_len > 0 && !is.read(ds.name.data(), name_len))
    throw FormatError("dataset container: truncated name");
  ds.X.resize(n, d);
  bin::read_f64_block(is, ds.X.data(), ds.X.size());
  if (has_labels) {
    ds.labels = Labels(static_cast<std::size_t>(n));
    for (auto& lab : *ds.labels) lab = static_cast<int>(bin::read_u32(is));
  }
  if (has_range) {
    ds.feat_min.resize(d);
    ds.feat_max.resize(d);
    bin::read_f64_block(is, ds.feat_min.data(), d);
    bin::read_f64_block(is, ds.feat_max.data(), d);
  }
  return ds;
}

}  // namespace damic
