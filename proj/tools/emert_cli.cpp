// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Command-line front end: dataset generation, preprocessing, annotation,
// training, evaluation and the experiment tables.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "emert/ala.hpp"
#include "emert/eyeprep.hpp"
#include "emert/harness.hpp"
#include "emert/kernels.hpp"
#include "emert/log.hpp"

namespace fs = std::filesystem;
using namespace emert;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kDataError = 3;

struct Globals {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string config;
  std::string out = "out";
  std::size_t threads = 1;
};

harness::Settings settings_for(const Globals& g) {
  harness::Settings s;
  if (!g.config.empty()) s = harness::load_settings(g.config);
  if (g.seed_set) s.spec.seed = g.seed;
  return s;
}

std::vector<data::MultimodalSample> dataset_for(const harness::Settings& s, const std::string& path) {
  data::CoarseMapping mapping{s.generate.surprise_positive};
  if (!path.empty()) {
    auto ds = data::load_dataset(path, mapping);
    if (ds.empty()) throw DataError("dataset " + path + " is empty");
    return ds;
  }
  data::GapSpec gap;
  gap.gap_rate = s.generate.gap_rate;
  gap.signal = s.generate.signal;
  gap.seed = s.spec.seed;
  gap.mapping = mapping;
  log_info("no --data given; generating " + std::to_string(s.generate.samples) + " synthetic samples");
  return data::generate_synthetic(s.generate.samples, gap, s.spec.model.dims);
}

harness::RunOptions run_options(const Globals& g) {
  harness::RunOptions o;
  o.threads = g.threads;
  o.progress = [](const std::string& msg) { log_info(msg); };
  return o;
}

void emit_table(const Globals& g, const std::string& stem, const std::string& title,
                const std::vector<harness::ReportRow>& rows) {
  harness::write_text(fs::path(g.out) / (stem + ".csv"), harness::table_csv(rows));
  const std::string summary = harness::table_summary(title, rows);
  harness::write_text(fs::path(g.out) / (stem + "_summary.txt"), summary);
  std::cout << summary;
}

int run_generate(const Globals& g) {
  const auto s = settings_for(g);
  const auto ds = dataset_for(s, "");
  const fs::path path = fs::path(g.out) / "dataset.jsonl";
  fs::create_directories(g.out);
  data::save_dataset(ds, path);
  std::cout << "wrote " << ds.size() << " samples to " << path.string() << '\n';
  return kOk;
}

int run_preprocess(const Globals& g, const std::string& input, std::size_t target_len) {
  const auto s = settings_for(g);
  const eye::RawEyeStream raw = input.empty() ? eye::synthetic_stream(s.spec.seed) : eye::read_raw_csv(input);
  eye::PreprocessOptions opt;
  opt.target_len = target_len;
  const auto r = eye::preprocess(raw, {}, opt);
  fs::create_directories(g.out);
  std::ofstream cleaned(fs::path(g.out) / "cleaned.csv");
  eye::write_cleaned_csv(cleaned, r.cleaned, r.pupil_fluct);
  harness::write_text(fs::path(g.out) / "preprocess_report.json", eye::report_json(r.report));
  std::cout << eye::report_json(r.report) << '\n';
  return kOk;
}

int run_annotate(const Globals& g, const std::string& input) {
  if (input.empty()) throw ConfigError("annotate needs --input <annotations.jsonl>");
  const auto items = ala::load_annotations(input);
  const auto report = ala::annotate(items);
  const std::string text = ala::report_json(report);
  harness::write_text(fs::path(g.out) / "annotation_report.json", text);
  std::cout << text << '\n';
  return kOk;
}

int run_train(const Globals& g, const std::string& data_path) {
  const auto s = settings_for(g);
  s.spec.validate();
  const auto ds = dataset_for(s, data_path);
  const auto cfg = s.spec.model_config();
  model::Emert net(cfg, s.spec.seed);
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  model::TrainOptions opt;
  opt.evaluate_er = harness::evaluates_er(s.spec.protocol);
  opt.on_epoch = [](const model::EpochLog& e) {
    std::ostringstream os;
    os << "epoch " << e.epoch << " loss " << e.total << " L_adv " << e.l_adv << " L_e " << e.l_e << " L_f "
       << e.l_f << " disc_FC " << e.disc_acc_fc << " disc_FP " << e.disc_acc_fp;
    log_info(os.str());
  };
  const auto log = model::train(net, ds, idx, s.spec.train, s.spec.seed, opt);
  fs::create_directories(g.out);
  net.save(fs::path(g.out) / "model.ckpt");
  harness::write_text(fs::path(g.out) / "training_log.csv", log.to_csv());
  std::cout << "checkpoint written to " << (fs::path(g.out) / "model.ckpt").string() << '\n';
  return kOk;
}

int run_eval(const Globals& g, const std::string& checkpoint, const std::string& data_path) {
  if (checkpoint.empty()) throw ConfigError("eval needs --checkpoint <file>");
  const auto s = settings_for(g);
  const auto net = model::Emert::load(checkpoint);
  const auto ds = dataset_for(s, data_path);
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto out = model::predict(net, ds, idx, s.spec.noise_variance, s.spec.seed);
  const auto& cfg = net.config();
  nlohmann::json result;
  for (bool er_view : {true, false}) {
    const auto& rows = er_view ? out.er : out.fer;
    if (rows.empty()) continue;
    const model::TaskMode mode = er_view ? cfg.er_mode : cfg.fer_mode;
    nlohmann::json j{{"task", model::to_string(mode)}};
    if (model::is_classification(mode)) {
      metrics::ConfusionMatrix cm(model::task_outputs(mode));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        cm.add(model::class_target(ds[i].labels, mode, er_view),
               static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin()));
      }
      const auto m = metrics::classification_metrics(cm);
      j.update({{"WAR", m.war}, {"UAR", m.uar}, {"F1", m.f1}});
    } else {
      std::vector<double> pred, target;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto t = model::regression_target(ds[i].labels, mode, er_view);
        pred.insert(pred.end(), rows[i].begin(), rows[i].end());
        target.insert(target.end(), t.begin(), t.end());
      }
      const auto m = metrics::regression_metrics(pred, target);
      j.update({{"MAE", m.mae}, {"MSE", m.mse}, {"RMSE", m.rmse}});
    }
    result[er_view ? "ER" : "FER"] = j;
  }
  harness::write_text(fs::path(g.out) / "eval.json", result.dump(2) + "\n");
  std::cout << result.dump(2) << '\n';
  return kOk;
}

int run_correlate(const Globals& g, const std::string& data_path) {
  const auto s = settings_for(g);
  const auto ds = dataset_for(s, data_path);
  const auto rows = harness::correlation_report(ds);
  harness::write_text(fs::path(g.out) / "correlation.csv", harness::correlation_csv(rows));
  const auto sum = harness::summarize(rows);
  const char* names[] = {"pearson", "spearman", "kendall"};
  for (std::size_t j = 0; j < 3; ++j) {
    std::cout << names[j] << ": ER ";
    if (sum.er[j]) std::cout << *sum.er[j]; else std::cout << "undefined";
    std::cout << "  FER ";
    if (sum.fer[j]) std::cout << *sum.fer[j]; else std::cout << "undefined";
    std::cout << '\n';
  }
  return kOk;
}

double cell(const harness::CsvTable& t, const std::vector<std::string>& row, std::string_view col) {
  const std::string& v = row[t.column(col)];
  if (v.empty()) return std::nan("");
  try {
    return std::stod(v);
  } catch (const std::exception&) {
    throw DataError("column " + std::string(col) + ": '" + v + "' is not a number");
  }
}

int run_plot(const Globals& g, const std::string& input_dir) {
  const fs::path dir = input_dir.empty() ? fs::path(g.out) : fs::path(input_dir);
  std::size_t written = 0;
  if (fs::exists(dir / "noise.csv")) {
    const auto t = harness::read_csv_table(dir / "noise.csv");
    const std::string metric = std::find(t.header.begin(), t.header.end(), "WAR_mean") != t.header.end() ? "WAR" : "MAE";
    std::vector<harness::Series> series;
    for (const std::string& m : metric == "WAR" ? std::vector<std::string>{"WAR", "F1"} : std::vector<std::string>{"MAE", "RMSE"}) {
      harness::Series sr{m, {}, {}};
      for (const auto& row : t.rows) {
        sr.x.push_back(cell(t, row, "noise_variance"));
        sr.y.push_back(cell(t, row, m + "_mean"));
      }
      series.push_back(sr);
    }
    harness::write_text(fs::path(g.out) / "noise.svg",
                        harness::line_plot_svg("Metric vs test-time noise", "noise variance", "score", series));
    ++written;
  }
  if (fs::exists(dir / "correlation.csv")) {
    const auto t = harness::read_csv_table(dir / "correlation.csv");
    std::vector<std::string> classes;
    std::vector<harness::Series> series;
    for (const char* view : {"ER", "FER"})
      for (const char* coef : {"pearson", "spearman", "kendall"}) series.push_back({std::string(view) + " " + coef, {}, {}});
    for (const auto& row : t.rows) {
      const bool er = row[t.column("view")] == "ER";
      if (er) classes.push_back(row[t.column("emotion")]);
      std::size_t k = 0;
      for (const char* coef : {"pearson", "spearman", "kendall"}) series[(er ? 0 : 3) + k++].y.push_back(cell(t, row, coef));
    }
    harness::write_text(fs::path(g.out) / "correlation.svg",
                        harness::bar_plot_svg("Eye-movement correlation by class", classes, series));
    ++written;
  }
  if (written == 0) throw DataError("no noise.csv or correlation.csv found in " + dir.string());
  std::cout << "wrote " << written << " plot(s) to " << g.out << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EMERT: eye-behavior-aided multimodal emotion recognition"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& v) { g.seed = v; g.seed_set = true; },
                                         "Random seed")->option_text("UINT");
  app.add_option("--config", g.config, "Flat key = value config file");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads for folds and grid cells")
      ->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag_callback("--scalar-kernels", [] { kernels::force(kernels::Isa::kScalar); },
                        "Use the scalar reference kernels");

  std::string data_path, input, checkpoint;
  std::size_t target_len = 32;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset (dataset.jsonl)");
  auto* preprocess = app.add_subcommand("preprocess", "Clean a raw eye-tracking CSV");
  preprocess->add_option("--input", input, "Raw eye CSV (synthetic stream when omitted)");
  preprocess->add_option("--target-len", target_len, "Resampled sequence length")->capture_default_str();
  auto* annotate = app.add_subcommand("annotate", "Fuse annotations with EM reliability weights");
  annotate->add_option("--input", input, "Annotation JSONL")->required();
  auto* train = app.add_subcommand("train", "Train one model on the whole dataset");
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  auto* ablate_modalities = app.add_subcommand("ablate-modalities", "Seven-row modality ablation");
  auto* ablate_modules = app.add_subcommand("ablate-modules", "Four-row module ablation");
  auto* noise = app.add_subcommand("noise", "Test-time Gaussian noise robustness");
  auto* sweep = app.add_subcommand("sweep", "alpha x beta grid");
  auto* cv = app.add_subcommand("cv", "Cross-validate the configured spec");
  auto* correlate = app.add_subcommand("correlate", "Eye-feature correlation per class and view");
  auto* plot = app.add_subcommand("plot", "Render noise.csv / correlation.csv as SVG");
  plot->add_option("--input", input, "Directory holding the CSVs (defaults to --out)");
  for (auto* sub : {train, eval, ablate_modalities, ablate_modules, noise, sweep, cv, correlate})
    sub->add_option("--data", data_path, "Dataset JSONL (synthetic when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    const auto opts = run_options(g);
    if (*generate) return run_generate(g);
    if (*preprocess) return run_preprocess(g, input, target_len);
    if (*annotate) return run_annotate(g, input);
    if (*train) return run_train(g, data_path);
    if (*eval) return run_eval(g, checkpoint, data_path);
    if (*correlate) return run_correlate(g, data_path);
    if (*plot) return run_plot(g, input);
    const auto s = settings_for(g);
    s.spec.validate();
    const auto ds = dataset_for(s, data_path);
    if (*cv) emit_table(g, "cv", "Cross-validation", {harness::run_cv(s.spec, ds, opts)});
    if (*ablate_modalities)
      emit_table(g, "ablate_modalities", "Modality ablation", harness::ablate_modalities(ds, s.spec, opts));
    if (*ablate_modules)
      emit_table(g, "ablate_modules", "Module ablation", harness::ablate_modules(ds, s.spec, opts));
    if (*sweep)
      emit_table(g, "sweep", "Hyperparameter sweep (* = best)",
                 harness::sweep_hyperparams(ds, s.spec, s.alphas, s.betas, opts));
    if (*noise) {
      const auto t = harness::noise_robustness(ds, s.spec, s.variances, opts);
      harness::write_text(fs::path(g.out) / "noise.csv", harness::noise_csv(t));
      std::vector<harness::ReportRow> rows = {t.clean};
      rows.insert(rows.end(), t.rows.begin(), t.rows.end());
      for (auto& r : rows) r.spec.label = "variance " + std::to_string(r.spec.noise_variance).substr(0, 4);
      const std::string summary = harness::table_summary("Noise robustness", rows);
      harness::write_text(fs::path(g.out) / "noise_summary.txt", summary);
      std::cout << summary;
    }
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
