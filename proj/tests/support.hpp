// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "emert/autodiff.hpp"

namespace emert::testing {

using diff::Tensor;
using diff::Var;

inline Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t = Tensor::zeros(rows, cols);
  for (double& v : t.data()) v = n(rng);
  return t;
}

// Worst relative disagreement between backward() and central differences
// over every entry of `params`. Relative error uses max(|a|, |n|, floor)
// as the denominator so exactly-zero gradients compare absolutely.
inline double gradient_check(const std::function<Var()>& loss_fn, const std::vector<Var>& params,
                             double step = 1e-5, double floor = 1e-4) {
  for (const auto& p : params) p.node()->ensure_grad().fill(0.0);
  diff::backward(loss_fn());
  std::vector<Tensor> analytic;
  for (const auto& p : params) analytic.push_back(p.grad());
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& value = params[k].node()->value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      double plus = 0.0, minus = 0.0;
      {
        diff::NoGradGuard guard;
        value[i] = saved + step;
        plus = loss_fn().value().item();
        value[i] = saved - step;
        minus = loss_fn().value().item();
      }
      value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace emert::testing
