// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <fstream>
#include <iomanip>
#include <sstream>

#include "emert/harness.hpp"

namespace emert::harness {

namespace {

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string quoted(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string opt(const std::optional<double>& v) { return v ? fixed(*v, 6) : ""; }

}  // namespace

std::string table_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os.precision(10);
  std::size_t folds = 0;
  for (const auto& r : rows) folds = std::max(folds, r.per_fold.size());
  os << "label,protocol,modalities,modules,multi_task,noise_variance,alpha_adv,beta_task,folds,seed";
  const auto names = rows.empty() ? std::vector<std::string>{} : rows.front().metric_names;
  for (const auto& m : names) os << ',' << m << "_mean," << m << "_std";
  os << ",disc_acc_FC,disc_acc_FP,best";
  for (std::size_t f = 0; f < folds; ++f)
    for (const auto& m : names) os << ",fold" << f + 1 << '_' << m;
  os << '\n';
  for (const auto& r : rows) {
    const auto& s = r.spec;
    os << quoted(s.label) << ',' << to_string(s.protocol) << ',' << s.modality_string() << ','
       << s.module_string() << ',' << (s.multi_task ? 1 : 0) << ',' << s.noise_variance << ','
       << s.alpha_adv << ',' << s.beta_task << ',' << s.folds << ',' << s.seed;
    for (std::size_t m = 0; m < r.mean.size(); ++m) os << ',' << r.mean[m] << ',' << r.stddev[m];
    os << ',' << opt(r.disc_acc_fc) << ',' << opt(r.disc_acc_fp) << ',' << (r.best ? 1 : 0);
    for (std::size_t f = 0; f < folds; ++f)
      for (std::size_t m = 0; m < r.metric_names.size(); ++m) {
        os << ',';
        if (f < r.per_fold.size()) os << r.per_fold[f][m];
      }
    os << '\n';
  }
  return os.str();
}

std::string table_summary(const std::string& title, const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << title << '\n';
  if (rows.empty()) return os.str();
  os << std::left << std::setw(22) << "row";
  for (const auto& m : rows.front().metric_names) os << std::setw(20) << m;
  os << '\n';
  for (const auto& r : rows) {
    os << std::setw(22) << (r.spec.label + (r.best ? " *" : ""));
    for (std::size_t m = 0; m < r.mean.size(); ++m) {
      const double scale = is_classification(r.spec.protocol) ? 100.0 : 1.0;
      os << std::setw(20) << (fixed(scale * r.mean[m], 2) + " +- " + fixed(scale * r.stddev[m], 2));
    }
    os << '\n';
  }
  return os.str();
}

std::string noise_csv(const NoiseTable& table) {
  std::vector<ReportRow> rows = {table.clean};
  rows.insert(rows.end(), table.rows.begin(), table.rows.end());
  return table_csv(rows);
}

std::string correlation_csv(const std::vector<CorrelationRow>& rows) {
  std::ostringstream os;
  os << "emotion,view,pearson,spearman,kendall,defined\n";
  for (const auto& r : rows)
    os << data::to_string(r.emotion) << ',' << (r.er_view ? "ER" : "FER") << ',' << opt(r.values.pearson)
       << ',' << opt(r.values.spearman) << ',' << opt(r.values.kendall) << ','
       << (r.defined() ? "yes" : "undefined") << '\n';
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace emert::harness
