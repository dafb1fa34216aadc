// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "emert/error.hpp"

namespace emert::metrics {

// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);
  static ConfusionMatrix from_counts(std::size_t classes, std::vector<std::int64_t> counts);
  static ConfusionMatrix from_labels(std::size_t classes, std::span<const int> truth,
                                     std::span<const int> predicted);

  void add(int truth, int predicted, std::int64_t count = 1);
  std::int64_t at(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * classes_ + predicted];
  }
  std::size_t classes() const { return classes_; }
  std::int64_t total() const;

 private:
  std::size_t classes_;
  std::vector<std::int64_t> counts_;
};

struct ClassificationMetrics {
  double war = 0.0;  // trace / total
  double uar = 0.0;  // mean recall over classes present in the truth
  double f1 = 0.0;   // macro F1; undefined per-class F1 counts as 0
};

// Throws ParameterError on an empty matrix.
ClassificationMetrics classification_metrics(const ConfusionMatrix& cm);

struct RegressionMetrics {
  double mae = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
};

RegressionMetrics regression_metrics(std::span<const double> predicted,
                                     std::span<const double> target);

// Raised when a coefficient has a zero denominator (constant input).
struct UndefinedCorrelation : ParameterError {
  using ParameterError::ParameterError;
};

double pearson(std::span<const double> x, std::span<const double> y);
// Pearson on mid-ranks.
double spearman(std::span<const double> x, std::span<const double> y);
// Tie-corrected tau-b, O(n log n).
double kendall_tau_b(std::span<const double> x, std::span<const double> y);

// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> x);

struct Correlations {
  std::optional<double> pearson;
  std::optional<double> spearman;
  std::optional<double> kendall;
};

// Each coefficient is empty when undefined for this input.
Correlations correlations(std::span<const double> x, std::span<const double> y);

}  // namespace emert::metrics
