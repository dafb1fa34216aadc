// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "emert/harness.hpp"

namespace emert::harness {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return mix(mix(seed ^ mix(a)) ^ b);
}

// Runs task(i) for i in [0, n) on up to `threads` workers. The first
// exception is rethrown after every worker has stopped.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& task) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        {
          std::lock_guard lock(failure_mutex);
          if (failure) return;
        }
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<std::string> metric_names(Protocol p) {
  if (is_classification(p)) return {"WAR", "UAR", "F1"};
  return {"MAE", "MSE", "RMSE"};
}

std::vector<double> score(const model::SampleOutputs& out, const std::vector<data::MultimodalSample>& ds,
                          const std::vector<std::size_t>& test, const model::ModelConfig& cfg, bool er_view) {
  const auto& rows = er_view ? out.er : out.fer;
  const model::TaskMode mode = er_view ? cfg.er_mode : cfg.fer_mode;
  if (model::is_classification(mode)) {
    metrics::ConfusionMatrix cm(model::task_outputs(mode));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      const int pred = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
      cm.add(model::class_target(ds[test[i]].labels, mode, er_view), pred);
    }
    const auto m = metrics::classification_metrics(cm);
    return {m.war, m.uar, m.f1};
  }
  std::vector<double> pred, target;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto t = model::regression_target(ds[test[i]].labels, mode, er_view);
    pred.insert(pred.end(), rows[i].begin(), rows[i].end());
    target.insert(target.end(), t.begin(), t.end());
  }
  const auto m = metrics::regression_metrics(pred, target);
  return {m.mae, m.mse, m.rmse};
}

struct FoldResult {
  std::vector<std::vector<double>> scores;  // [variance][metric]
  std::optional<double> acc_fc, acc_fp;
};

// Trains one fold of `spec` and scores the model at each test-time noise variance.
FoldResult run_fold(const ExperimentSpec& spec, const std::vector<data::MultimodalSample>& ds,
                    const data::DatasetSplit& split, std::size_t fold,
                    const std::vector<double>& variances) {
  const model::ModelConfig cfg = spec.model_config();
  const auto train_idx = split.train_indices(static_cast<int>(fold));
  const auto test_idx = split.test_indices(static_cast<int>(fold));
  if (train_idx.empty() || test_idx.empty())
    throw DataError("fold " + std::to_string(fold) + " has an empty train or test side");
  std::set<std::string> train_ids;
  for (std::size_t i : train_idx) train_ids.insert(ds[i].sample_id);
  for (std::size_t i : test_idx)
    if (train_ids.count(ds[i].sample_id))
      throw ContractError("test sample '" + ds[i].sample_id + "' appears in the training set of fold " +
                          std::to_string(fold));

  model::Emert net(cfg, derive(spec.seed, 1, fold));
  const model::TrainingLog log = model::train(net, ds, train_idx, spec.train, derive(spec.seed, 2, fold));
  FoldResult r;
  if (net.has_discriminator() && !log.epochs.empty()) {
    r.acc_fc = log.epochs.back().disc_acc_fc;
    r.acc_fp = log.epochs.back().disc_acc_fp;
  }
  for (std::size_t v = 0; v < variances.size(); ++v) {
    const auto out = model::predict(net, ds, test_idx, variances[v], derive(spec.seed, 3, fold * 64 + v));
    r.scores.push_back(score(out, ds, test_idx, cfg, evaluates_er(spec.protocol)));
  }
  return r;
}

ReportRow reduce(const ExperimentSpec& spec, const std::vector<FoldResult>& folds, std::size_t variance) {
  ReportRow row;
  row.spec = spec;
  row.metric_names = metric_names(spec.protocol);
  const std::size_t k = row.metric_names.size();
  row.mean.assign(k, 0.0);
  row.stddev.assign(k, 0.0);
  double fc = 0.0, fp = 0.0;
  for (const auto& f : folds) {
    row.per_fold.push_back(f.scores[variance]);
    if (f.acc_fc) fc += *f.acc_fc;
    if (f.acc_fp) fp += *f.acc_fp;
  }
  const double n = static_cast<double>(folds.size());
  for (std::size_t m = 0; m < k; ++m) {
    for (const auto& f : row.per_fold) row.mean[m] += f[m];
    row.mean[m] /= n;
    if (folds.size() > 1) {
      double ss = 0.0;
      for (const auto& f : row.per_fold) ss += (f[m] - row.mean[m]) * (f[m] - row.mean[m]);
      row.stddev[m] = std::sqrt(ss / (n - 1.0));
    }
  }
  if (!folds.empty() && folds.front().acc_fc) {
    row.disc_acc_fc = fc / n;
    row.disc_acc_fp = fp / n;
  }
  return row;
}

// Runs every (spec, fold) pair in one pool; returns [spec][variance] rows.
std::vector<std::vector<ReportRow>> run_grid(const std::vector<ExperimentSpec>& specs,
                                             const std::vector<data::MultimodalSample>& ds,
                                             const std::vector<double>& variances,
                                             const RunOptions& options) {
  if (ds.empty()) throw DataError("dataset is empty");
  std::vector<data::DatasetSplit> splits;
  for (const auto& s : specs) {
    s.validate();
    if (ds.size() < s.folds) throw DataError("dataset has fewer samples than folds");
    splits.push_back(data::kfold_split(ds, s.folds, derive(s.seed, 0)));
  }
  std::vector<std::pair<std::size_t, std::size_t>> tasks;
  for (std::size_t s = 0; s < specs.size(); ++s)
    for (std::size_t f = 0; f < specs[s].folds; ++f) tasks.emplace_back(s, f);

  std::vector<std::vector<FoldResult>> results(specs.size());
  for (std::size_t s = 0; s < specs.size(); ++s) results[s].resize(specs[s].folds);
  std::mutex progress_mutex;
  parallel_for(tasks.size(), options.threads, [&](std::size_t t) {
    const auto [s, f] = tasks[t];
    results[s][f] = run_fold(specs[s], ds, splits[s], f, variances);
    if (options.progress) {
      std::lock_guard lock(progress_mutex);
      options.progress(specs[s].label + " fold " + std::to_string(f + 1) + "/" +
                       std::to_string(specs[s].folds) + " done");
    }
  });

  std::vector<std::vector<ReportRow>> rows(specs.size());
  for (std::size_t s = 0; s < specs.size(); ++s)
    for (std::size_t v = 0; v < variances.size(); ++v) {
      ExperimentSpec echo = specs[s];
      echo.noise_variance = variances[v];
      rows[s].push_back(reduce(echo, results[s], v));
    }
  return rows;
}

std::vector<ReportRow> run_specs(const std::vector<ExperimentSpec>& specs,
                                 const std::vector<data::MultimodalSample>& ds, const RunOptions& options) {
  // Specs may differ in their own noise variance, so each is scored at its own.
  std::vector<ReportRow> out;
  std::vector<double> distinct;
  for (const auto& s : specs)
    if (std::find(distinct.begin(), distinct.end(), s.noise_variance) == distinct.end())
      distinct.push_back(s.noise_variance);
  const auto grid = run_grid(specs, ds, distinct, options);
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const auto v = static_cast<std::size_t>(
        std::find(distinct.begin(), distinct.end(), specs[s].noise_variance) - distinct.begin());
    out.push_back(grid[s][v]);
  }
  return out;
}

}  // namespace

const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::kEr3: return "er3";
    case Protocol::kEr7: return "er7";
    case Protocol::kFer3: return "fer3";
    case Protocol::kFer7: return "fer7";
    case Protocol::kErVa: return "er_va";
    case Protocol::kFerVa: return "fer_va";
    case Protocol::kFerIntensity: return "fer_intensity";
  }
  return "?";
}

std::optional<Protocol> parse_protocol(std::string_view s) {
  for (Protocol p : {Protocol::kEr3, Protocol::kEr7, Protocol::kFer3, Protocol::kFer7, Protocol::kErVa,
                     Protocol::kFerVa, Protocol::kFerIntensity})
    if (s == to_string(p)) return p;
  return std::nullopt;
}

bool evaluates_er(Protocol p) { return p == Protocol::kEr3 || p == Protocol::kEr7 || p == Protocol::kErVa; }

bool is_classification(Protocol p) {
  return p != Protocol::kErVa && p != Protocol::kFerVa && p != Protocol::kFerIntensity;
}

void apply_protocol(Protocol p, model::ModelConfig& cfg) {
  using model::TaskMode;
  switch (p) {
    case Protocol::kEr3:
    case Protocol::kFer3: cfg.er_mode = cfg.fer_mode = TaskMode::kClassify3; break;
    case Protocol::kEr7:
    case Protocol::kFer7: cfg.er_mode = cfg.fer_mode = TaskMode::kClassify7; break;
    case Protocol::kErVa:
    case Protocol::kFerVa: cfg.er_mode = cfg.fer_mode = TaskMode::kRegressVa; break;
    case Protocol::kFerIntensity:
      cfg.er_mode = TaskMode::kRegressVa;
      cfg.fer_mode = TaskMode::kRegressIntensity;
      break;
  }
}

void ExperimentSpec::validate() const {
  if (std::none_of(modalities.begin(), modalities.end(), [](bool b) { return b; }))
    throw ConfigError("modality mask must keep at least one modality");
  if (folds < 2) throw ConfigError("folds must be >= 2");
  if (!(noise_variance >= 0.0)) throw ParameterError("noise variance must be >= 0");
  if (!(alpha_adv >= 0.0) || !(beta_task >= 0.0)) throw ConfigError("loss weights must be >= 0");
  if (evaluates_er(protocol) && !model.er_head)
    throw ConfigError(std::string("protocol ") + to_string(protocol) + " scores the ER head, which is disabled");
  if (!evaluates_er(protocol) && !model.fer_head)
    throw ConfigError(std::string("protocol ") + to_string(protocol) + " scores the FER head, which is disabled");
  model_config().validate();
}

model::ModelConfig ExperimentSpec::model_config() const {
  model::ModelConfig c = model;
  apply_protocol(protocol, c);
  c.modalities = modalities;
  c.use_mafd = use_mafd;
  c.use_emt = use_emt;
  c.alpha_adv = alpha_adv;
  c.beta_task = beta_task;
  if (!multi_task) {
    c.er_head = evaluates_er(protocol);
    c.fer_head = !c.er_head;
  }
  return c;
}

std::string ExperimentSpec::modality_string() const {
  std::string s;
  for (std::size_t m = 0; m < model::kModalities; ++m)
    if (modalities[m]) s += "FEG"[m];
  return s;
}

std::string ExperimentSpec::module_string() const {
  if (use_mafd && use_emt) return "MAFD+EMT";
  if (use_mafd) return "MAFD";
  if (use_emt) return "EMT";
  return "baseline";
}

double ReportRow::metric_mean(std::string_view name) const {
  for (std::size_t i = 0; i < metric_names.size(); ++i)
    if (metric_names[i] == name) return mean[i];
  throw ParameterError("row has no metric '" + std::string(name) + "'");
}

ReportRow run_cv(const ExperimentSpec& spec, const std::vector<data::MultimodalSample>& dataset,
                 const RunOptions& options) {
  return run_specs({spec}, dataset, options).front();
}

std::vector<ReportRow> ablate_modalities(const std::vector<data::MultimodalSample>& dataset,
                                         const ExperimentSpec& base, const RunOptions& options) {
  static constexpr std::array<std::array<bool, 3>, 7> kMasks = {{{true, false, false},
                                                                  {false, true, false},
                                                                  {false, false, true},
                                                                  {true, true, false},
                                                                  {true, false, true},
                                                                  {false, true, true},
                                                                  {true, true, true}}};
  std::vector<ExperimentSpec> specs;
  for (const auto& mask : kMasks) {
    ExperimentSpec s = base;
    s.modalities = mask;
    s.label = s.modality_string();
    specs.push_back(s);
  }
  return run_specs(specs, dataset, options);
}

std::vector<ReportRow> ablate_modules(const std::vector<data::MultimodalSample>& dataset,
                                      const ExperimentSpec& base, const RunOptions& options) {
  std::vector<ExperimentSpec> specs;
  for (const auto& [mafd, emt] : std::array<std::pair<bool, bool>, 4>{{{false, false}, {true, false},
                                                                       {false, true}, {true, true}}}) {
    ExperimentSpec s = base;
    s.use_mafd = mafd;
    s.use_emt = emt;
    s.label = s.module_string();
    specs.push_back(s);
  }
  return run_specs(specs, dataset, options);
}

NoiseTable noise_robustness(const std::vector<data::MultimodalSample>& dataset, const ExperimentSpec& base,
                            const std::vector<double>& variances, const RunOptions& options) {
  for (double v : variances)
    if (!(v >= 0.0)) throw ParameterError("noise variance must be >= 0, got " + std::to_string(v));
  std::vector<double> all = {0.0};
  all.insert(all.end(), variances.begin(), variances.end());
  ExperimentSpec spec = base;
  spec.noise_variance = 0.0;
  if (spec.label.empty()) spec.label = "noise";
  auto grid = run_grid({spec}, dataset, all, options);
  NoiseTable t;
  t.clean = grid[0][0];
  t.rows.assign(grid[0].begin() + 1, grid[0].end());
  return t;
}

std::vector<ReportRow> sweep_hyperparams(const std::vector<data::MultimodalSample>& dataset,
                                         const ExperimentSpec& base, const std::vector<double>& alphas,
                                         const std::vector<double>& betas, const RunOptions& options) {
  if (alphas.empty() || betas.empty()) throw ConfigError("hyperparameter grid is empty");
  std::vector<ExperimentSpec> specs;
  for (double a : alphas)
    for (double b : betas) {
      ExperimentSpec s = base;
      s.alpha_adv = a;
      s.beta_task = b;
      s.label = "alpha=" + std::to_string(a).substr(0, 4) + " beta=" + std::to_string(b).substr(0, 4);
      specs.push_back(s);
    }
  auto rows = run_specs(specs, dataset, options);
  const bool higher_better = is_classification(base.protocol);
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double a = rows[i].mean[0], b = rows[best].mean[0];
    if (higher_better ? a > b : a < b) best = i;
  }
  rows[best].best = true;
  return rows;
}

std::vector<CorrelationRow> correlation_report(const std::vector<data::MultimodalSample>& dataset) {
  if (dataset.empty()) throw DataError("dataset is empty");
  const std::size_t n = dataset.size();
  const std::size_t channels = dataset.front().eyemove_seq.cols();
  // Per-sample channel means of the eye-movement sequence.
  std::vector<std::vector<double>> feature(channels, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    const diff::Tensor& t = dataset[i].eyemove_seq;
    if (t.cols() != channels) throw DataError("sample '" + dataset[i].sample_id + "' has a different eye width");
    for (std::size_t r = 0; r < t.rows(); ++r)
      for (std::size_t c = 0; c < channels; ++c) feature[c][i] += t.at(r, c) / static_cast<double>(t.rows());
  }
  std::vector<CorrelationRow> rows;
  for (std::size_t k = 0; k < data::kFineClasses; ++k)
    for (bool er_view : {true, false}) {
      CorrelationRow row;
      row.emotion = static_cast<data::Fine>(k);
      row.er_view = er_view;
      std::vector<double> indicator(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& l = dataset[i].labels;
        indicator[i] = static_cast<std::size_t>(er_view ? l.er_fine : l.fer_fine) == k ? 1.0 : 0.0;
      }
      std::array<double, 3> sum = {0, 0, 0};
      std::array<std::size_t, 3> count = {0, 0, 0};
      if (n >= 2)
        for (std::size_t c = 0; c < channels; ++c) {
          const auto cc = metrics::correlations(feature[c], indicator);
          const std::array<std::optional<double>, 3> v = {cc.pearson, cc.spearman, cc.kendall};
          for (std::size_t j = 0; j < 3; ++j)
            if (v[j]) {
              sum[j] += std::abs(*v[j]);
              ++count[j];
            }
        }
      auto avg = [&](std::size_t j) -> std::optional<double> {
        if (count[j] == 0) return std::nullopt;
        return sum[j] / static_cast<double>(count[j]);
      };
      row.values = {avg(0), avg(1), avg(2)};
      rows.push_back(row);
    }
  return rows;
}

CorrelationSummary summarize(const std::vector<CorrelationRow>& rows) {
  CorrelationSummary s;
  for (bool er_view : {true, false}) {
    auto& dst = er_view ? s.er : s.fer;
    for (std::size_t j = 0; j < 3; ++j) {
      double sum = 0.0;
      std::size_t count = 0;
      for (const auto& r : rows) {
        if (r.er_view != er_view) continue;
        const std::optional<double> v = j == 0 ? r.values.pearson : j == 1 ? r.values.spearman : r.values.kendall;
        if (v) {
          sum += *v;
          ++count;
        }
      }
      if (count > 0) dst[j] = sum / static_cast<double>(count);
    }
  }
  return s;
}

}  // namespace emert::harness
