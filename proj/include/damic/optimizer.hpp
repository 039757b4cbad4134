#pragma once

#include <cmath>
#include <vector>

#include "damic/core.hpp"
#include "damic/layers.hpp"

namespace damic {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long long t = 0;
  std::vector<Eigen::ArrayXd> m, v;
};

inline AdamState make_adam(const std::vector<ParamRef>& ps, double lr = 1e-3) {
  AdamState s;
  s.lr = lr;
  s.m.reserve(ps.size());
  s.v.reserve(ps.size());
  for (const auto& p : ps) {
    s.m.push_back(Eigen::ArrayXd::Zero(p.n));
    s.v.push_back(Eigen::ArrayXd::Zero(p.n));
  }
  return s;
}

inline void adam_step(const std::vector<ParamRef>& ps, AdamState& s) {
  if (ps.size() != s.m.size()) throw StateError("adam_step: state/parameter count mismatch");
  s.t += 1;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto g = ps[i].g();
    if (!g.isFinite().all()) throw TrainingError("adam_step: non-finite gradient");
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g.square();
    ps[i].v() -= s.lr * (s.m[i] / bc1) / ((s.v[i] / bc2).sqrt() + s.epsilon);
  }
}

}  // namespace damic
