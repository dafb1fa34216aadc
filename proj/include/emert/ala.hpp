// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "emert/tensor.hpp"

namespace emert::ala {

inline constexpr std::string_view kMachineAnnotator = "machine";

struct ExpertLabel {
  std::string annotator;
  int label = 0;
};

// Labels for one item: an optional machine pre-label plus expert labels.
struct AnnotationBundle {
  std::string item_id;
  std::optional<int> machine_label;
  std::vector<ExpertLabel> expert_labels;
  int class_count = 0;

  // Throws ParameterError on out-of-range labels or an empty bundle.
  void validate() const;
  // (annotator, label) pairs including the machine, sorted by annotator id.
  std::vector<ExpertLabel> all_labels() const;
};

struct FilterResult {
  std::map<std::string, int> accepted;
  std::vector<std::string> contested;
};

// Items whose machine label matches the ER label are accepted as-is; the
// rest (including items without a machine label) go to re-annotation.
FilterResult consistency_filter(const std::vector<AnnotationBundle>& bundles,
                                const std::map<std::string, int>& er_labels);

struct EmOptions {
  int max_iterations = 500;
  double tolerance = 1e-8;  // stop when the log-likelihood gain drops below this
  double init_expert = 0.7;
  double init_machine = 0.6;
  bool include_machine = true;
  double clamp = 1e-6;
};

// One scalar reliability per annotator. A label from annotator i is correct
// with probability alpha_i and otherwise uniform over the other K-1 classes.
struct ReliabilityModel {
  std::map<std::string, double> alpha;
  std::vector<double> class_prior;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;
  std::vector<double> log_likelihood_trace;  // one entry per E-step
  // Posterior over the true class per bundle, computed from the returned
  // alpha and prior.
  std::vector<std::vector<double>> posteriors;
};

ReliabilityModel em_reliability(const std::vector<AnnotationBundle>& bundles,
                                const EmOptions& options = {});

// Posterior over the true class of one bundle under fixed parameters.
std::vector<double> item_posterior(const AnnotationBundle& bundle,
                                   const std::map<std::string, double>& alpha,
                                   const std::vector<double>& prior, bool include_machine = true);
// Marginal log-likelihood of all bundles under fixed parameters.
double log_likelihood(const std::vector<AnnotationBundle>& bundles,
                      const std::map<std::string, double>& alpha,
                      const std::vector<double>& prior, bool include_machine = true);

// argmax_c sum_i alpha_i / sum(alpha) * [t_i == c]; ties go to the lower
// class index.
int weighted_vote(const AnnotationBundle& bundle, const std::map<std::string, double>& alpha,
                  bool include_machine = true);
int weighted_vote(const AnnotationBundle& bundle, const ReliabilityModel& model,
                  bool include_machine = true);
int majority_vote(const AnnotationBundle& bundle, bool include_machine = true);

// ratings is [items, raters]. Sample variances (n-1). Throws ParameterError
// when the total-score variance is zero.
double cronbach_alpha(const diff::Tensor& ratings);

// ---- batch annotation job ----

struct AnnotatedItem {
  AnnotationBundle bundle;
  std::optional<int> er_label;
  std::map<std::string, double> valence;  // annotator -> rating
  std::map<std::string, double> arousal;
};

struct AnnotationReport {
  std::map<std::string, int> fused;
  std::vector<std::string> contested;
  ReliabilityModel model;
  std::optional<double> cronbach_discrete;
  std::optional<double> cronbach_valence;
  std::optional<double> cronbach_arousal;
};

AnnotationReport annotate(const std::vector<AnnotatedItem>& items, const EmOptions& options = {});

std::vector<AnnotatedItem> load_annotations(const std::filesystem::path& path);
AnnotatedItem annotation_from_json_line(std::string_view line, std::size_t line_number);
std::string report_json(const AnnotationReport& report);

}  // namespace emert::ala
