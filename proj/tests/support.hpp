#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "damic/model.hpp"
#include "damic/train.hpp"

namespace damic::testing {

// Central finite differences of the full mixture loss over every model parameter,
// with batch-norm statistics frozen (eval mode). Returns the max relative error.
inline double model_grad_check(DamicModel& model, const Matrix& X, double h = 1e-5) {
  damic_joint_backward(model, X, Mode::eval);
  auto ps = model_params(model);
  std::vector<Eigen::ArrayXd> analytic;
  analytic.reserve(ps.size());
  for (const auto& p : ps) analytic.push_back(p.g());

  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < ps.size(); ++pi) {
    for (Index i = 0; i < ps[pi].n; ++i) {
      double saved = ps[pi].value[i];
      ps[pi].value[i] = saved + h;
      double lp = damic_joint_loss(model, X, Mode::eval);
      ps[pi].value[i] = saved - h;
      double lm = damic_joint_loss(model, X, Mode::eval);
      ps[pi].value[i] = saved;
      double numeric = (lp - lm) / (2.0 * h);
      double a = analytic[pi][i];
      double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

inline int distinct_labels(const Labels& labels) {
  std::vector<int> sorted = labels;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  return static_cast<int>(sorted.size());
}

}  // namespace damic::testing
