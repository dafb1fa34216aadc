// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "emert/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace emert::metrics {
namespace {

void check_pair(std::span<const double> x, std::span<const double> y, std::size_t min_len) {
  if (x.size() != y.size())
    throw ParameterError("length mismatch: " + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()));
  if (x.size() < min_len)
    throw ParameterError("need at least " + std::to_string(min_len) + " values");
}

// Number of tied pairs among consecutive equal runs of a sorted sequence.
template <typename Eq>
std::int64_t tied_pairs(std::size_t n, Eq equal) {
  std::int64_t pairs = 0;
  std::size_t run = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i < n && equal(i - 1, i)) {
      ++run;
    } else {
      pairs += static_cast<std::int64_t>(run) * static_cast<std::int64_t>(run - 1) / 2;
      run = 1;
    }
  }
  return pairs;
}

// Sorts v ascending, returning the number of inversions removed.
std::int64_t merge_count(std::vector<double>& v, std::vector<double>& buf, std::size_t lo,
                         std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + lo, buf.begin() + hi, v.begin() + lo);
  return swaps;
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::size_t classes)
    : classes_(classes), counts_(classes * classes, 0) {
  if (classes == 0) throw ParameterError("confusion matrix needs at least one class");
}

ConfusionMatrix ConfusionMatrix::from_counts(std::size_t classes, std::vector<std::int64_t> counts) {
  ConfusionMatrix cm(classes);
  if (counts.size() != classes * classes)
    throw ParameterError("expected " + std::to_string(classes * classes) + " counts");
  if (std::any_of(counts.begin(), counts.end(), [](std::int64_t c) { return c < 0; }))
    throw ParameterError("confusion counts must be non-negative");
  cm.counts_ = std::move(counts);
  return cm;
}

ConfusionMatrix ConfusionMatrix::from_labels(std::size_t classes, std::span<const int> truth,
                                             std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw ParameterError("truth/prediction length mismatch");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

void ConfusionMatrix::add(int truth, int predicted, std::int64_t count) {
  const auto k = static_cast<int>(classes_);
  if (truth < 0 || truth >= k || predicted < 0 || predicted >= k)
    throw ParameterError("class index outside [0," + std::to_string(k) + ")");
  counts_[static_cast<std::size_t>(truth) * classes_ + static_cast<std::size_t>(predicted)] += count;
}

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0});
}

ClassificationMetrics classification_metrics(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total <= 0) throw ParameterError("classification metrics on an empty confusion matrix");
  const std::size_t k = cm.classes();
  std::int64_t trace = 0;
  double recall_sum = 0.0, f1_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::int64_t row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const std::int64_t tp = cm.at(c, c);
    trace += tp;
    if (row > 0) {
      recall_sum += static_cast<double>(tp) / static_cast<double>(row);
      ++present;
    }
    if (row > 0 && col > 0 && tp > 0) {
      const double p = static_cast<double>(tp) / static_cast<double>(col);
      const double r = static_cast<double>(tp) / static_cast<double>(row);
      f1_sum += 2.0 * p * r / (p + r);
    }
  }
  ClassificationMetrics m;
  m.war = static_cast<double>(trace) / static_cast<double>(total);
  m.uar = recall_sum / static_cast<double>(present);
  m.f1 = f1_sum / static_cast<double>(k);
  return m;
}

RegressionMetrics regression_metrics(std::span<const double> predicted,
                                     std::span<const double> target) {
  check_pair(predicted, target, 1);
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - target[i];
    abs_sum += std::abs(d);
    sq_sum += d * d;
  }
  const double n = static_cast<double>(predicted.size());
  RegressionMetrics m;
  m.mae = abs_sum / n;
  m.mse = sq_sum / n;
  m.rmse = std::sqrt(m.mse);
  return m;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 2);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelation("pearson undefined for constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 2);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  try {
    return pearson(rx, ry);
  } catch (const UndefinedCorrelation&) {
    throw UndefinedCorrelation("spearman undefined for constant input");
  }
}

double kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 2);
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  const std::int64_t tx = tied_pairs(n, [&](std::size_t a, std::size_t b) { return x[idx[a]] == x[idx[b]]; });
  const std::int64_t txy = tied_pairs(n, [&](std::size_t a, std::size_t b) {
    return x[idx[a]] == x[idx[b]] && y[idx[a]] == y[idx[b]];
  });
  std::vector<double> ys(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[idx[i]];
  const std::int64_t swaps = merge_count(ys, buf, 0, n);
  const std::int64_t ty = tied_pairs(n, [&](std::size_t a, std::size_t b) { return ys[a] == ys[b]; });
  const std::int64_t pairs = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const double denom = std::sqrt(static_cast<double>(pairs - tx) * static_cast<double>(pairs - ty));
  if (denom == 0.0) throw UndefinedCorrelation("kendall tau-b undefined for constant input");
  const double s = static_cast<double>(pairs - tx - ty + txy - 2 * swaps);
  return std::clamp(s / denom, -1.0, 1.0);
}

Correlations correlations(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 2);
  Correlations c;
  try { c.pearson = pearson(x, y); } catch (const UndefinedCorrelation&) {}
  try { c.spearman = spearman(x, y); } catch (const UndefinedCorrelation&) {}
  try { c.kendall = kendall_tau_b(x, y); } catch (const UndefinedCorrelation&) {}
  return c;
}

}  // namespace emert::metrics
