#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "decokan/tensor.hpp"

namespace decokan::testutil {

/// Central finite differences over every element of every tensor in params.
/// loss_fn must rebuild the whole computation from current parameter values.
/// Returns the worst |analytic - numeric| / max(|analytic|, |numeric|, floor).
struct GradCheckResult {
  double worst_rel = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

inline GradCheckResult grad_check(std::vector<Tensor> params,
                                  const std::function<Tensor()>& loss_fn,
                                  double h = 1e-5, double floor = 1e-3) {
  for (auto& p : params) p.zero_grad();
  Tensor loss = loss_fn();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params)
    analytic.emplace_back(p.grad().begin(), p.grad().end());

  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto vals = params[pi].mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double up = loss_fn().item();
      vals[i] = orig - h;
      const double down = loss_fn().item();
      vals[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][i];
      const double rel =
          std::fabs(a - numeric) /
          std::max({std::fabs(a), std::fabs(numeric), floor});
      ++res.checked;
      if (rel > res.worst_rel) {
        res.worst_rel = rel;
        res.worst_analytic = a;
        res.worst_numeric = numeric;
      }
    }
  }
  return res;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -2.0,
                            double hi = 2.0, bool requires_grad = true) {
  return uniform(std::move(shape), lo, hi, rng, requires_grad);
}

inline double max_abs_diff(std::span<const double> a,
                           std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::fabs(a[i] - b[i]));
  return worst;
}

}  // namespace decokan::testutil
