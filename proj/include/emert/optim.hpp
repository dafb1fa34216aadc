// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <vector>

#include "emert/autodiff.hpp"

namespace emert::diff {

// SGD with heavy-ball momentum and a cosine-decayed rate:
//   rate(t) = base * 0.5 * (1 + cos(pi * min(t, total) / total))
//   v <- momentum * v + g;  w <- w - rate(t) * v
class SgdMomentum {
 public:
  SgdMomentum(std::vector<Var> params, double base_rate, std::size_t total_steps,
              double momentum = 0.9);

  double rate() const { return rate_at(step_); }
  double rate_at(std::size_t t) const;
  std::size_t steps_taken() const { return step_; }
  std::size_t total_steps() const { return total_steps_; }
  double base_rate() const { return base_rate_; }

  // Applies one update with the current rate, advances the step counter and
  // zeroes every parameter gradient.
  void step();
  void zero_grad();

 private:
  std::vector<Var> params_;
  std::vector<Tensor> velocity_;
  double base_rate_;
  std::size_t total_steps_;
  double momentum_;
  std::size_t step_ = 0;
};

}  // namespace emert::diff
