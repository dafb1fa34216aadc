// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "emert/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "emert/error.hpp"
#include "emert/kernels.hpp"

namespace emert::diff {

SgdMomentum::SgdMomentum(std::vector<Var> params, double base_rate, std::size_t total_steps,
                         double momentum)
    : params_(std::move(params)),
      base_rate_(base_rate),
      total_steps_(total_steps),
      momentum_(momentum) {
  if (!(base_rate >= 0.0)) throw ParameterError("learning rate must be >= 0");
  if (total_steps == 0) throw ParameterError("total_steps must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("momentum must lie in [0,1)");
  velocity_.reserve(params_.size());
  for (const Var& p : params_) velocity_.emplace_back(p.shape());
}

double SgdMomentum::rate_at(std::size_t t) const {
  const double frac = static_cast<double>(std::min(t, total_steps_)) /
                      static_cast<double>(total_steps_);
  return base_rate_ * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void SgdMomentum::step() {
  const double lr = rate();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& v = velocity_[i];
    Tensor& g = params_[i].grad();
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = momentum_ * v[j] + g[j];
    if (lr != 0.0) kernels::axpy(v.size(), -lr, v.ptr(), params_[i].value().ptr());
    if (!params_[i].value().all_finite()) throw NumericalError("parameter became non-finite");
  }
  ++step_;
  zero_grad();
}

void SgdMomentum::zero_grad() {
  for (Var& p : params_) p.grad().fill(0.0);
}

}  // namespace emert::diff
