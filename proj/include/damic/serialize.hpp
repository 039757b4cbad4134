#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "damic/core.hpp"
#include "damic/model.hpp"

namespace damic {

// Little-endian binary primitives shared by the model and dataset containers.
namespace bin {

inline void write_u8(std::ostream& os, std::uint8_t v) {
  os.put(static_cast<char>(v));
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline void write_f64(std::ostream& os, double v) {
  write_u64(os, std::bit_cast<std::uint64_t>(v));
}

inline std::uint8_t read_u8(std::istream& is) {
  int c = is.get();
  if (c == EOF) throw FormatError("container truncated");
  return static_cast<std::uint8_t>(c);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("container truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw FormatError("container truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double read_f64(std::istream& is) {
  return std::bit_cast<double>(read_u64(is));
}

inline void write_f64_block(std::ostream& os, const double* data, Index n) {
  for (Index i = 0; i < n; ++i) write_f64(os, data[i]);
}

inline void read_f64_block(std::istream& is, double* data, Index n) {
  for (Index i = 0; i < n; ++i) data[i] = read_f64(is);
}

inline void write_magic(std::ostream& os, const char (&magic)[9]) {
  os.write(magic, 8);
}

inline void expect_magic(std::istream& is, const char (&magic)[9], const std::string& what) {
  char got[8];
  if (!is.read(got, 8) || std::memcmp(got, magic, 8) != 0)
    throw FormatError(what + ": bad magic");
}

}  // namespace bin

namespace detail {

constexpr std::uint8_t kTagAffine = 0;
constexpr std::uint8_t kTagBatchNorm = 1;
constexpr std::uint8_t kTagActivation = 2;

inline void write_net(std::ostream& os, const MultiLayerNet& net) {
  bin::write_u64(os, static_cast<std::uint64_t>(net.in_dim));
  bin::write_u64(os, static_cast<std::uint64_t>(net.out_dim));
  bin::write_u64(os, net.layers.size());
  for (const auto& layer : net.layers) {
    if (const auto* a = std::get_if<AffineLayer>(&layer)) {
      bin::write_u8(os, kTagAffine);
      bin::write_u64(os, static_cast<std::uint64_t>(a->out_dim()));
      bin::write_u64(os, static_cast<std::uint64_t>(a->in_dim()));
      bin::write_f64_block(os, a->W.data(), a->W.size());
      bin::write_f64_block(os, a->b.data(), a->b.size());
    } else if (const auto* b = std::get_if<BatchNormLayer>(&layer)) {
      bin::write_u8(os, kTagBatchNorm);
      bin::write_u64(os, static_cast<std::uint64_t>(b->features()));
      bin::write_f64(os, b->momentum);
      bin::write_f64(os, b->epsilon);
      bin::write_f64_block(os, b->gamma.data(), b->gamma.size());
      bin::write_f64_block(os, b->beta.data(), b->beta.size());
      bin::write_f64_block(os, b->running_mean.data(), b->running_mean.size());
      bin::write_f64_block(os, b->running_var.data(), b->running_var.size());
    } else {
      bin::write_u8(os, kTagActivation);
      bin::write_u8(os, static_cast<std::uint8_t>(std::get<ActivationLayer>(layer).kind));
    }
  }
}

inline MultiLayerNet read_net(std::istream& is) {
  MultiLayerNet net;
  net.in_dim = static_cast<Index>(bin::read_u64(is));
  net.out_dim = static_cast<Index>(bin::read_u64(is));
  std::uint64_t n_layers = bin::read_u64(is);
  net.layers.reserve(n_layers);
  for (std::uint64_t i = 0; i < n_layers; ++i) {
    std::uint8_t tag = bin::read_u8(is);
    if (tag == kTagAffine) {
      Index out = static_cast<Index>(bin::read_u64(is));
      Index in = static_cast<Index>(bin::read_u64(is));
      AffineLayer a(out, in);
      bin::read_f64_block(is, a.W.data(), a.W.size());
      bin::read_f64_block(is, a.b.data(), a.b.size());
      net.layers.emplace_back(std::move(a));
    } else if (tag == kTagBatchNorm) {
      Index features = static_cast<Index>(bin::read_u64(is));
      BatchNormLayer b(features);
      b.momentum = bin::read_f64(is);
      b.epsilon = bin::read_f64(is);
      bin::read_f64_block(is, b.gamma.data(), b.gamma.size());
      bin::read_f64_block(is, b.beta.data(), b.beta.size());
      bin::read_f64_block(is, b.running_mean.data(), b.running_mean.size());
      bin::read_f64_block(is, b.running_var.data(), b.running_var.size());
      net.layers.emplace_back(std::move(b));
    } else if (tag == kTagActivation) {
      std::uint8_t kind = bin::read_u8(is);
      if (kind > static_cast<std::uint8_t>(Activation::softmax))
        throw FormatError("model container: unknown activation kind");
      net.layers.emplace_back(ActivationLayer{static_cast<Activation>(kind)});
    } else {
      throw FormatError("model container: unknown layer tag");
    }
  }
  return net;
}

}  // namespace detail

constexpr char kModelMagic[9] = "DMCMDL01";

inline void save_model(const std::string& path, const DamicModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  bin::write_magic(os, kModelMagic);
  bin::write_u32(os, 1);  // version
  bin::write_u64(os, static_cast<std::uint64_t>(model.k));
  bin::write_u64(os, static_cast<std::uint64_t>(model.d));
  detail::write_net(os, model.gate.body);
  bin::write_u64(os, static_cast<std::uint64_t>(model.gate.head.out_dim()));
  bin::write_u64(os, static_cast<std::uint64_t>(model.gate.head.in_dim()));
  bin::write_f64_block(os, model.gate.head.W.data(), model.gate.head.W.size());
  bin::write_f64_block(os, model.gate.head.b.data(), model.gate.head.b.size());
  for (const auto& expert : model.bank.experts) detail::write_net(os, expert);
  if (!os) throw IoError("write failed: " + path);
}

inline DamicModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  bin::expect_magic(is, kModelMagic, "model container");
  std::uint32_t version = bin::read_u32(is);
  if (version != 1) throw FormatError("model container: unsupported version");
  DamicModel model;
  model.k = static_cast<Index>(bin::read_u64(is));
  model.d = static_cast<Index>(bin::read_u64(is));
  model.gate.body = detail::read_net(is);
  Index head_out = static_cast<Index>(bin::read_u64(is));
  Index head_in = static_cast<Index>(bin::read_u64(is));
  model.gate.head = AffineLayer(head_out, head_in);
  bin::read_f64_block(is, model.gate.head.W.data(), model.gate.head.W.size());
  bin::read_f64_block(is, model.gate.head.b.data(), model.gate.head.b.size());
  for (Index i = 0; i < model.k; ++i) model.bank.experts.push_back(detail::read_net(is));
  if (model.gate.head.out_dim() != model.k)
    throw FormatError("model container: gate head does not match k");
  return model;
}

}  // namespace damic
