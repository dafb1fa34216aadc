// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "emert/harness.hpp"

using namespace emert;
using namespace emert::harness;

namespace {

data::SequenceDims tiny_dims() { return data::SequenceDims{2, 4, 4, 3, 4, 3}; }

ExperimentSpec tiny_spec() {
  ExperimentSpec s;
  s.folds = 2;
  s.seed = 7;
  s.model.feature_width = 8;
  s.model.ffn_width = 8;
  s.model.layers = 1;
  s.model.heads = 2;
  s.model.disc_hidden = 8;
  s.model.head_hidden = 8;
  s.model.dims = tiny_dims();
  s.train.epochs = 1;
  s.train.batch_size = 8;
  return s;
}

std::vector<data::MultimodalSample> tiny_data(std::size_t n = 24, std::uint64_t seed = 2) {
  data::GapSpec g;
  g.seed = seed;
  return data::generate_synthetic(n, g, tiny_dims());
}

bool same_rows(const std::vector<ReportRow>& a, const std::vector<ReportRow>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].per_fold != b[i].per_fold || a[i].mean != b[i].mean || a[i].stddev != b[i].stddev) return false;
  return true;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("emert_test_harness_" + name);
}

}  // namespace

TEST_CASE("protocol names and head assignment") {
  for (Protocol p : {Protocol::kEr3, Protocol::kEr7, Protocol::kFer3, Protocol::kFer7, Protocol::kErVa,
                     Protocol::kFerVa, Protocol::kFerIntensity})
    CHECK(parse_protocol(to_string(p)) == p);
  CHECK_FALSE(parse_protocol("er9").has_value());
  CHECK(evaluates_er(Protocol::kErVa));
  CHECK_FALSE(evaluates_er(Protocol::kFer7));
  CHECK(is_classification(Protocol::kFer7));
  CHECK_FALSE(is_classification(Protocol::kFerIntensity));

  model::ModelConfig c;
  apply_protocol(Protocol::kFerIntensity, c);
  CHECK(c.fer_mode == model::TaskMode::kRegressIntensity);
  CHECK(c.er_mode == model::TaskMode::kRegressVa);
  apply_protocol(Protocol::kEr7, c);
  CHECK(c.er_mode == model::TaskMode::kClassify7);
}

TEST_CASE("spec validation") {
  auto s = tiny_spec();
  CHECK_NOTHROW(s.validate());
  CHECK(s.modality_string() == "FEG");
  CHECK(s.module_string() == "MAFD+EMT");
  s.use_mafd = false;
  CHECK(s.module_string() == "EMT");
  s.use_emt = false;
  CHECK(s.module_string() == "baseline");

  s = tiny_spec();
  s.modalities = {false, false, false};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = tiny_spec();
  s.folds = 1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = tiny_spec();
  s.model.er_head = false;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.protocol = Protocol::kFer3;
  CHECK_NOTHROW(s.validate());

  s = tiny_spec();
  s.multi_task = false;
  const auto cfg = s.model_config();
  CHECK(cfg.er_head);
  CHECK_FALSE(cfg.fer_head);
}

TEST_CASE("cross-validation row shape and metric ranges") {
  const auto data = tiny_data();
  auto spec = tiny_spec();
  spec.modalities = {true, false, false};
  const auto row = run_cv(spec, data);
  CHECK(row.metric_names == std::vector<std::string>{"WAR", "UAR", "F1"});
  REQUIRE(row.per_fold.size() == 2);
  for (const auto& fold : row.per_fold)
    for (double v : fold) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  // Sample standard deviation over folds.
  const double a = row.per_fold[0][0], b = row.per_fold[1][0];
  CHECK(row.mean[0] == doctest::Approx((a + b) / 2));
  CHECK(row.stddev[0] == doctest::Approx(std::abs(a - b) / std::sqrt(2.0)));
  CHECK(row.disc_acc_fc.has_value());
  CHECK(row.metric_mean("UAR") == row.mean[1]);
  CHECK_THROWS_AS(row.metric_mean("AUC"), ParameterError);

  spec.protocol = Protocol::kErVa;
  const auto reg = run_cv(spec, data);
  CHECK(reg.metric_names == std::vector<std::string>{"MAE", "MSE", "RMSE"});
  CHECK(reg.mean[2] * reg.mean[2] <= reg.mean[1] + 1e-12);
}

TEST_CASE("cross-validation data errors") {
  auto spec = tiny_spec();
  CHECK_THROWS_AS(run_cv(spec, {}), DataError);
  spec.folds = 5;
  CHECK_THROWS_AS(run_cv(spec, tiny_data(3)), DataError);
}

TEST_CASE("experiment tables have the expected rows") {
  const auto data = tiny_data();
  const auto base = tiny_spec();

  const auto mods = ablate_modalities(data, base);
  REQUIRE(mods.size() == 7);
  const char* order[] = {"F", "E", "G", "FE", "FG", "EG", "FEG"};
  for (std::size_t i = 0; i < 7; ++i) CHECK(mods[i].spec.modality_string() == order[i]);

  const auto modules = ablate_modules(data, base);
  REQUIRE(modules.size() == 4);
  CHECK(modules[0].spec.module_string() == "baseline");
  CHECK(modules[1].spec.module_string() == "MAFD");
  CHECK(modules[2].spec.module_string() == "EMT");
  CHECK(modules[3].spec.module_string() == "MAFD+EMT");
  CHECK_FALSE(modules[0].disc_acc_fc.has_value());

  const auto sweep = sweep_hyperparams(data, base);
  REQUIRE(sweep.size() == 9);
  CHECK(sweep[0].spec.alpha_adv == 0.1);
  CHECK(sweep[1].spec.beta_task == 0.1);
  CHECK(sweep[3].spec.alpha_adv == 0.3);
  CHECK(std::count_if(sweep.begin(), sweep.end(), [](const ReportRow& r) { return r.best; }) == 1);
  for (const auto& r : sweep)
    if (r.best)
      for (const auto& o : sweep) CHECK(r.mean[0] >= o.mean[0]);

  const auto noise = noise_robustness(data, base);
  REQUIRE(noise.rows.size() == 3);
  CHECK(noise.rows[0].spec.noise_variance == 0.01);
  CHECK(noise.rows[2].spec.noise_variance == 0.1);
  CHECK_THROWS_AS(noise_robustness(data, base, {-0.1}), ParameterError);
}

TEST_CASE("reruns are bitwise identical, and threads do not change results") {
  const auto data = tiny_data();
  const auto base = tiny_spec();
  const auto a = ablate_modules(data, base);
  const auto b = ablate_modules(data, base);
  CHECK(same_rows(a, b));
  CHECK(table_csv(a) == table_csv(b));
  RunOptions two;
  two.threads = 2;
  const auto c = ablate_modules(data, base, two);
  CHECK(same_rows(a, c));
}

TEST_CASE("zero noise reproduces the clean scores") {
  const auto data = tiny_data();
  const auto table = noise_robustness(data, tiny_spec(), {0.0, 0.5});
  CHECK(table.rows[0].per_fold == table.clean.per_fold);
}

TEST_CASE("correlation report") {
  data::GapSpec g;
  g.seed = 9;
  const auto data = data::generate_synthetic(300, g);
  const auto rows = correlation_report(data);
  REQUIRE(rows.size() == 14);
  CHECK(rows[0].er_view);
  CHECK_FALSE(rows[1].er_view);
  CHECK(rows[0].emotion == rows[1].emotion);
  CHECK(rows[2].emotion != rows[0].emotion);
  const auto summary = summarize(rows);
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(summary.er[i].has_value());
    REQUIRE(summary.fer[i].has_value());
    CHECK(*summary.er[i] > *summary.fer[i]);
  }

  // A class absent from the data has a constant indicator and is undefined.
  data::GapSpec only;
  only.seed = 3;
  only.gap_rate = 0.0;
  only.class_priors = {0.5, 0.5, 0, 0, 0, 0, 0};
  const auto few = correlation_report(data::generate_synthetic(40, only));
  CHECK(few[0].defined());
  CHECK_FALSE(few[4].defined());
  const auto csv = correlation_csv(few);
  CHECK(csv.rfind("emotion,view,pearson,spearman,kendall,defined", 0) == 0);
  CHECK(csv.find("undefined") != std::string::npos);
}

TEST_CASE("settings parser") {
  const auto s = parse_settings(
      "# comment\n"
      "protocol = fer7\n"
      "modalities = FG   # trailing comment\n"
      "modules = MAFD\n"
      "epochs = 3\n"
      "feature_width = 16\n"
      "heads = 2\n"
      "variances = 0.2, 0.4\n"
      "samples = 50\n");
  CHECK(s.spec.protocol == Protocol::kFer7);
  CHECK(s.spec.modality_string() == "FG");
  CHECK(s.spec.use_mafd);
  CHECK_FALSE(s.spec.use_emt);
  CHECK(s.spec.train.epochs == 3);
  CHECK(s.spec.model.feature_width == 16);
  CHECK(s.variances == std::vector<double>{0.2, 0.4});
  CHECK(s.generate.samples == 50);

  auto expect_error = [](const std::string& text, const std::string& fragment) {
    try {
      parse_settings(text);
      FAIL("expected a config error for: " << text);
    } catch (const ConfigError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos, e.what());
    }
  };
  expect_error("epochs = 2\nwidth_of_things = 3\n", "line 2");
  expect_error("epochs = many\n", "epochs");
  expect_error("protocol = er9\n", "line 1");
  expect_error("just words\n", "line 1");
  expect_error("modalities = FX\n", "modalities");
  expect_error("gap_rate = 2\n", "gap_rate");
  CHECK_THROWS_AS(load_settings(temp_path("missing.cfg")), ConfigError);
}

TEST_CASE("report writers") {
  const auto data = tiny_data();
  auto spec = tiny_spec();
  spec.label = "tiny, quoted";
  const auto row = run_cv(spec, data);
  const auto csv = table_csv({row});
  CHECK(csv.rfind("label,protocol,modalities,modules,multi_task,noise_variance,alpha_adv,beta_task,folds,seed,WAR_mean", 0) == 0);
  CHECK(csv.find("fold1_F1") != std::string::npos);

  const auto path = temp_path("table.csv");
  write_text(path, csv);
  const auto table = read_csv_table(path);
  REQUIRE(table.rows.size() == 1);
  CHECK(table.rows[0][table.column("label")] == "tiny, quoted");
  CHECK(std::stod(table.rows[0][table.column("WAR_mean")]) == doctest::Approx(row.mean[0]));
  CHECK_THROWS_AS(table.column("nope"), DataError);
  std::filesystem::remove(path);

  const auto summary = table_summary("Tiny", {row});
  CHECK(summary.find("Tiny") != std::string::npos);
  CHECK(summary.find("+-") != std::string::npos);

  const auto noise = noise_robustness(data, tiny_spec(), {0.1});
  CHECK(noise_csv(noise).find("0.1") != std::string::npos);
}

TEST_CASE("SVG plots") {
  const auto line = line_plot_svg("t", "x", "y", {{"a", {0, 1, 2}, {0.1, 0.5, 0.3}}, {"b", {0, 1, 2}, {0.2, 0.2, 0.9}}});
  CHECK(line.rfind("<svg", 0) == 0);
  CHECK(line.find("</svg>") != std::string::npos);
  CHECK(line.find("polyline") != std::string::npos);
  const auto bars = bar_plot_svg("t", {"P", "S", "K"}, {{"ER", {}, {0.3, 0.3, 0.2}}, {"FER", {}, {0.1, 0.1, 0.1}}});
  CHECK(std::count(bars.begin(), bars.end(), '\n') > 5);
  CHECK(bars.find("<rect") != std::string::npos);
}
