#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "damic/core.hpp"
#include "damic/layers.hpp"

namespace damic {

// Central finite differences against the analytic backward pass.
// Batch norm layers, if any, run with frozen (eval) statistics so the loss is a
// deterministic function of the parameters. Returns the max relative error
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-12) over all parameters.
template <typename LossFn>
double grad_check(MultiLayerNet& net, const Matrix& X, LossFn&& loss_fn, double h = 1e-5) {
  zero_grads(net);
  ForwardCache cache = forward(net, X, Mode::eval);
  auto [loss0, dY] = loss_fn(cache.output());
  (void)loss0;
  backward(net, cache, dY);

  auto ps = params(net);
  std::vector<Eigen::ArrayXd> analytic;
  analytic.reserve(ps.size());
  for (const auto& p : ps) analytic.push_back(p.g());

  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < ps.size(); ++pi) {
    for (Index i = 0; i < ps[pi].n; ++i) {
      double saved = ps[pi].value[i];
      ps[pi].value[i] = saved + h;
      double lp = loss_fn(predict(net, X)).first;
      ps[pi].value[i] = saved - h;
      double lm = loss_fn(predict(net, X)).first;
      ps[pi].value[i] = saved;
      double numeric = (lp - lm) / (2.0 * h);
      double a = analytic[pi][i];
      double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace damic
