// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "emert/data.hpp"
#include "emert/metrics.hpp"
#include "emert/model.hpp"

namespace emert::harness {

enum class Protocol { kEr3, kEr7, kFer3, kFer7, kErVa, kFerVa, kFerIntensity };

const char* to_string(Protocol p);
std::optional<Protocol> parse_protocol(std::string_view s);
bool evaluates_er(Protocol p);
bool is_classification(Protocol p);
// Sets both heads' task modes for the protocol.
void apply_protocol(Protocol p, model::ModelConfig& cfg);

struct ExperimentSpec {
  Protocol protocol = Protocol::kEr3;
  std::array<bool, model::kModalities> modalities = {true, true, true};  // F, E, G
  bool use_mafd = true;
  bool use_emt = true;
  bool multi_task = true;  // false keeps only the evaluated head
  double noise_variance = 0.0;  // test-time only
  double alpha_adv = 0.3;
  double beta_task = 0.1;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  model::ModelConfig model;  // widths and dims; the fields above take precedence
  model::TrainConfig train;
  std::string label;

  // Throws ConfigError.
  void validate() const;
  model::ModelConfig model_config() const;
  std::string modality_string() const;  // e.g. "FEG", "F"
  std::string module_string() const;    // "baseline", "MAFD", "EMT", "MAFD+EMT"
};

struct ReportRow {
  ExperimentSpec spec;
  std::vector<std::string> metric_names;
  std::vector<std::vector<double>> per_fold;  // [fold][metric]
  std::vector<double> mean;
  std::vector<double> stddev;  // sample standard deviation; 0 for one fold
  // Final-epoch discriminator accuracies, averaged over folds.
  std::optional<double> disc_acc_fc, disc_acc_fp;
  bool best = false;

  // Throws ParameterError for an unknown metric.
  double metric_mean(std::string_view name) const;
};

struct RunOptions {
  std::size_t threads = 1;
  std::function<void(const std::string&)> progress;
};

// Trains and scores one spec over `folds` stratified folds.
ReportRow run_cv(const ExperimentSpec& spec, const std::vector<data::MultimodalSample>& dataset,
                 const RunOptions& options = {});

// All seven nonempty subsets of {F, E, G}, in the order F, E, G, FE, FG, EG, FEG.
std::vector<ReportRow> ablate_modalities(const std::vector<data::MultimodalSample>& dataset,
                                         const ExperimentSpec& base, const RunOptions& options = {});

// baseline, +MAFD, +EMT, +MAFD+EMT.
std::vector<ReportRow> ablate_modules(const std::vector<data::MultimodalSample>& dataset,
                                      const ExperimentSpec& base, const RunOptions& options = {});

struct NoiseTable {
  ReportRow clean;
  std::vector<ReportRow> rows;  // one per variance, in the given order
};

// Trains once per fold and scores the same model on clean and noisy test inputs.
NoiseTable noise_robustness(const std::vector<data::MultimodalSample>& dataset,
                            const ExperimentSpec& base,
                            const std::vector<double>& variances = {0.01, 0.05, 0.1},
                            const RunOptions& options = {});

// Full factorial over alphas x betas, alpha-major. The best row is flagged.
std::vector<ReportRow> sweep_hyperparams(const std::vector<data::MultimodalSample>& dataset,
                                         const ExperimentSpec& base,
                                         const std::vector<double>& alphas = {0.1, 0.3, 0.5},
                                         const std::vector<double>& betas = {0.01, 0.1, 1.0},
                                         const RunOptions& options = {});

struct CorrelationRow {
  data::Fine emotion = data::Fine::kNeutral;
  bool er_view = true;
  metrics::Correlations values;  // mean |r| over eye-movement channels
  bool defined() const { return values.pearson || values.spearman || values.kendall; }
};

// 7 classes x {ER, FER}, class-major with ER first.
std::vector<CorrelationRow> correlation_report(const std::vector<data::MultimodalSample>& dataset);

struct CorrelationSummary {
  // Pearson, Spearman, Kendall means over defined rows of each view.
  std::array<std::optional<double>, 3> er, fer;
};
CorrelationSummary summarize(const std::vector<CorrelationRow>& rows);

// ---- reports ----

std::string table_csv(const std::vector<ReportRow>& rows);
std::string table_summary(const std::string& title, const std::vector<ReportRow>& rows);
std::string noise_csv(const NoiseTable& table);
std::string correlation_csv(const std::vector<CorrelationRow>& rows);
void write_text(const std::filesystem::path& path, const std::string& text);

// ---- plots (static SVG) ----

struct Series {
  std::string name;
  std::vector<double> x, y;
};
std::string line_plot_svg(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<Series>& series);
// Grouped bars: one group per category, one bar per series (y only).
std::string bar_plot_svg(const std::string& title, const std::vector<std::string>& categories,
                         const std::vector<Series>& series);

// ---- flat key = value configuration ----

struct GenerateOptions {
  std::size_t samples = 500;
  double gap_rate = 0.3;
  double signal = 1.0;
  bool surprise_positive = true;
};

struct Settings {
  ExperimentSpec spec;
  GenerateOptions generate;
  std::vector<double> variances = {0.01, 0.05, 0.1};
  std::vector<double> alphas = {0.1, 0.3, 0.5};
  std::vector<double> betas = {0.01, 0.1, 1.0};
};

// One `key = value` per line; `#` starts a comment. Unknown keys and bad
// values throw ConfigError naming the line.
Settings parse_settings(std::string_view text, Settings base = {});
Settings load_settings(const std::filesystem::path& path, Settings base = {});

// Minimal CSV reader for the plot subcommand: header plus rows of cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t column(std::string_view name) const;  // throws DataError
};
CsvTable read_csv_table(const std::filesystem::path& path);

}  // namespace emert::harness
