// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "emert/ala.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include <json.hpp>

#include "emert/error.hpp"
#include "emert/log.hpp"

namespace emert::ala {
namespace {

using json = nlohmann::json;

std::vector<ExpertLabel> labels_for(const AnnotationBundle& b, bool include_machine) {
  std::vector<ExpertLabel> out = b.expert_labels;
  if (include_machine && b.machine_label) out.push_back({std::string(kMachineAnnotator), *b.machine_label});
  std::sort(out.begin(), out.end(),
            [](const ExpertLabel& x, const ExpertLabel& y) { return x.annotator < y.annotator; });
  return out;
}

double log_sum_exp(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  if (mx == -std::numeric_limits<double>::infinity()) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

// Unnormalized log joint log P(c, labels) per class.
std::vector<double> log_joint(const AnnotationBundle& b, const std::map<std::string, double>& alpha,
                              const std::vector<double>& prior, bool include_machine) {
  const auto k = static_cast<std::size_t>(b.class_count);
  std::vector<double> lj(k);
  for (std::size_t c = 0; c < k; ++c) lj[c] = std::log(prior[c]);
  const double others = static_cast<double>(k - 1);
  for (const auto& l : labels_for(b, include_machine)) {
    auto it = alpha.find(l.annotator);
    if (it == alpha.end()) throw ParameterError("no reliability for annotator '" + l.annotator + "'");
    const double hit = std::log(it->second);
    const double miss = std::log((1.0 - it->second) / others);
    for (std::size_t c = 0; c < k; ++c) lj[c] += static_cast<int>(c) == l.label ? hit : miss;
  }
  return lj;
}

int class_count_of(const std::vector<AnnotationBundle>& bundles) {
  if (bundles.empty()) throw ParameterError("no annotation bundles");
  const int k = bundles.front().class_count;
  for (const auto& b : bundles) {
    if (b.class_count != k) throw ParameterError("bundles disagree on class count");
    b.validate();
  }
  if (k < 2) throw ParameterError("class count must be >= 2");
  return k;
}

std::optional<double> try_cronbach(const diff::Tensor& ratings) {
  try {
    return cronbach_alpha(ratings);
  } catch (const ParameterError&) {
    return std::nullopt;
  }
}

// Items x raters matrix from the items every rater scored.
std::optional<double> cronbach_from_maps(const std::vector<std::map<std::string, double>>& rows) {
  std::set<std::string> raters;
  for (const auto& r : rows)
    for (const auto& [name, _] : r) raters.insert(name);
  if (raters.size() < 2) return std::nullopt;
  std::vector<double> data;
  std::size_t items = 0;
  for (const auto& r : rows) {
    if (r.size() != raters.size()) continue;
    for (const auto& name : raters) data.push_back(r.at(name));
    ++items;
  }
  if (items < 2) return std::nullopt;
  return try_cronbach(diff::Tensor({items, raters.size()}, std::move(data)));
}

}  // namespace

void AnnotationBundle::validate() const {
  if (class_count < 2) throw ParameterError("item '" + item_id + "': class_count must be >= 2");
  if (!machine_label && expert_labels.empty())
    throw ParameterError("item '" + item_id + "': bundle has no labels");
  auto check = [&](int label) {
    if (label < 0 || label >= class_count)
      throw ParameterError("item '" + item_id + "': label " + std::to_string(label) +
                           " outside [0," + std::to_string(class_count) + ")");
  };
  if (machine_label) check(*machine_label);
  std::set<std::string> seen;
  for (const auto& e : expert_labels) {
    check(e.label);
    if (e.annotator == kMachineAnnotator)
      throw ParameterError("item '" + item_id + "': expert id 'machine' is reserved");
    if (!seen.insert(e.annotator).second)
      throw ParameterError("item '" + item_id + "': duplicate annotator '" + e.annotator + "'");
  }
}

std::vector<ExpertLabel> AnnotationBundle::all_labels() const { return labels_for(*this, true); }

FilterResult consistency_filter(const std::vector<AnnotationBundle>& bundles,
                                const std::map<std::string, int>& er_labels) {
  FilterResult out;
  for (const auto& b : bundles) {
    auto it = er_labels.find(b.item_id);
    if (it == er_labels.end()) throw ParameterError("no ER label for item '" + b.item_id + "'");
    if (b.machine_label && *b.machine_label == it->second)
      out.accepted[b.item_id] = it->second;
    else
      out.contested.push_back(b.item_id);
  }
  return out;
}

std::vector<double> item_posterior(const AnnotationBundle& bundle,
                                   const std::map<std::string, double>& alpha,
                                   const std::vector<double>& prior, bool include_machine) {
  auto lj = log_joint(bundle, alpha, prior, include_machine);
  const double z = log_sum_exp(lj);
  for (double& v : lj) v = std::exp(v - z);
  return lj;
}

double log_likelihood(const std::vector<AnnotationBundle>& bundles,
                      const std::map<std::string, double>& alpha, const std::vector<double>& prior,
                      bool include_machine) {
  double ll = 0.0;
  for (const auto& b : bundles) ll += log_sum_exp(log_joint(b, alpha, prior, include_machine));
  return ll;
}

ReliabilityModel em_reliability(const std::vector<AnnotationBundle>& bundles, const EmOptions& opt) {
  const int k = class_count_of(bundles);
  const auto uk = static_cast<std::size_t>(k);

  ReliabilityModel model;
  std::map<std::string, std::size_t> counts;
  for (const auto& b : bundles)
    for (const auto& l : labels_for(b, opt.include_machine)) ++counts[l.annotator];
  for (const auto& [name, _] : counts)
    model.alpha[name] = name == kMachineAnnotator ? opt.init_machine : opt.init_expert;
  model.class_prior.assign(uk, 1.0 / static_cast<double>(k));

  if (counts.size() < 2 || bundles.size() < 2) {
    log_warning("em_reliability: need >= 2 annotators over >= 2 items; using alpha = 0.5");
    for (auto& [_, a] : model.alpha) a = 0.5;
    model.degenerate = true;
    for (const auto& b : bundles)
      model.posteriors.push_back(item_posterior(b, model.alpha, model.class_prior, opt.include_machine));
    model.log_likelihood = log_likelihood(bundles, model.alpha, model.class_prior, opt.include_machine);
    return model;
  }

  const double lo = opt.clamp, hi = 1.0 - opt.clamp;
  std::vector<std::vector<double>> post(bundles.size());
  double previous = -std::numeric_limits<double>::infinity();
  for (int it = 0;; ++it) {
    // E-step
    double ll = 0.0;
    for (std::size_t j = 0; j < bundles.size(); ++j) {
      auto lj = log_joint(bundles[j], model.alpha, model.class_prior, opt.include_machine);
      const double z = log_sum_exp(lj);
      ll += z;
      for (double& v : lj) v = std::exp(v - z);
      post[j] = std::move(lj);
    }
    model.log_likelihood_trace.push_back(ll);
    assert(ll >= previous - 1e-9 * std::max(1.0, std::abs(previous)));
    model.log_likelihood = ll;
    model.iterations = it;
    if (it > 0 && ll - previous < opt.tolerance) {
      model.converged = true;
      break;
    }
    if (it >= opt.max_iterations) break;
    previous = ll;

    // M-step
    std::map<std::string, double> hits;
    for (std::size_t j = 0; j < bundles.size(); ++j)
      for (const auto& l : labels_for(bundles[j], opt.include_machine))
        hits[l.annotator] += post[j][static_cast<std::size_t>(l.label)];
    for (auto& [name, a] : model.alpha)
      a = std::clamp(hits[name] / static_cast<double>(counts[name]), lo, hi);
    std::fill(model.class_prior.begin(), model.class_prior.end(), 0.0);
    for (const auto& q : post)
      for (std::size_t c = 0; c < uk; ++c) model.class_prior[c] += q[c];
    for (double& p : model.class_prior) p /= static_cast<double>(bundles.size());
  }
  model.posteriors = std::move(post);
  return model;
}

int weighted_vote(const AnnotationBundle& bundle, const std::map<std::string, double>& alpha,
                  bool include_machine) {
  const auto labels = labels_for(bundle, include_machine);
  if (labels.empty()) throw ParameterError("weighted_vote on an empty bundle '" + bundle.item_id + "'");
  if (bundle.class_count < 1) throw ParameterError("bundle has no classes");
  double total = 0.0;
  for (const auto& l : labels) {
    auto it = alpha.find(l.annotator);
    if (it == alpha.end()) throw ParameterError("no reliability for annotator '" + l.annotator + "'");
    total += it->second;
  }
  std::vector<double> score(static_cast<std::size_t>(bundle.class_count), 0.0);
  for (const auto& l : labels) score[static_cast<std::size_t>(l.label)] += alpha.at(l.annotator) / total;
  int best = 0;
  for (std::size_t c = 1; c < score.size(); ++c)
    if (score[c] > score[static_cast<std::size_t>(best)] + 1e-12) best = static_cast<int>(c);
  return best;
}

int weighted_vote(const AnnotationBundle& bundle, const ReliabilityModel& model, bool include_machine) {
  return weighted_vote(bundle, model.alpha, include_machine);
}

int majority_vote(const AnnotationBundle& bundle, bool include_machine) {
  const auto labels = labels_for(bundle, include_machine);
  if (labels.empty()) throw ParameterError("majority_vote on an empty bundle");
  std::vector<int> count(static_cast<std::size_t>(bundle.class_count), 0);
  for (const auto& l : labels) ++count[static_cast<std::size_t>(l.label)];
  return static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
}

double cronbach_alpha(const diff::Tensor& ratings) {
  const std::size_t n = ratings.rows(), k = ratings.cols();
  if (n < 2 || k < 2) throw ParameterError("cronbach_alpha needs >= 2 items and >= 2 raters");
  if (!ratings.all_finite()) throw ParameterError("cronbach_alpha ratings must be finite");
  auto sample_var = [n](auto value_at) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += value_at(i);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (value_at(i) - mean) * (value_at(i) - mean);
    return ss / static_cast<double>(n - 1);
  };
  double rater_var = 0.0;
  for (std::size_t r = 0; r < k; ++r) rater_var += sample_var([&](std::size_t i) { return ratings.at(i, r); });
  std::vector<double> totals(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < k; ++r) totals[i] += ratings.at(i, r);
  const double total_var = sample_var([&](std::size_t i) { return totals[i]; });
  if (total_var == 0.0) throw ParameterError("cronbach_alpha undefined: total score variance is zero");
  const double dk = static_cast<double>(k);
  return dk / (dk - 1.0) * (1.0 - rater_var / total_var);
}

AnnotationReport annotate(const std::vector<AnnotatedItem>& items, const EmOptions& options) {
  AnnotationReport report;
  std::vector<AnnotationBundle> with_er, contested;
  std::map<std::string, int> er;
  for (const auto& item : items) {
    item.bundle.validate();
    if (item.er_label) {
      with_er.push_back(item.bundle);
      er[item.bundle.item_id] = *item.er_label;
    } else {
      contested.push_back(item.bundle);
    }
  }
  FilterResult filtered = consistency_filter(with_er, er);
  report.fused = filtered.accepted;
  std::set<std::string> contested_ids(filtered.contested.begin(), filtered.contested.end());
  for (const auto& b : with_er)
    if (contested_ids.count(b.item_id)) contested.push_back(b);
  std::sort(contested.begin(), contested.end(),
            [](const AnnotationBundle& a, const AnnotationBundle& b) { return a.item_id < b.item_id; });
  for (const auto& b : contested) report.contested.push_back(b.item_id);

  if (!contested.empty()) {
    report.model = em_reliability(contested, options);
    for (const auto& b : contested) report.fused[b.item_id] = weighted_vote(b, report.model, options.include_machine);
  }

  std::vector<std::map<std::string, double>> discrete, valence, arousal;
  for (const auto& b : contested) {
    std::map<std::string, double> row;
    for (const auto& l : labels_for(b, options.include_machine)) row[l.annotator] = l.label;
    discrete.push_back(std::move(row));
  }
  for (const auto& item : items) {
    if (!item.valence.empty()) valence.push_back(item.valence);
    if (!item.arousal.empty()) arousal.push_back(item.arousal);
  }
  report.cronbach_discrete = cronbach_from_maps(discrete);
  report.cronbach_valence = cronbach_from_maps(valence);
  report.cronbach_arousal = cronbach_from_maps(arousal);
  return report;
}

AnnotatedItem annotation_from_json_line(std::string_view line, std::size_t line_number) {
  const std::string where = "line " + std::to_string(line_number) + ": ";
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(where + "invalid JSON: " + e.what());
  }
  auto fail = [&](const char* field, const std::string& why) {
    return DataError(where + "field '" + field + "': " + why);
  };
  AnnotatedItem item;
  try {
    if (!j.contains("item_id") || !j["item_id"].is_string()) throw fail("item_id", "missing or not a string");
    item.bundle.item_id = j["item_id"].get<std::string>();
    if (!j.contains("class_count") || !j["class_count"].is_number_integer())
      throw fail("class_count", "missing or not an integer");
    item.bundle.class_count = j["class_count"].get<int>();
    if (j.contains("machine_label") && !j["machine_label"].is_null()) {
      if (!j["machine_label"].is_number_integer()) throw fail("machine_label", "not an integer");
      item.bundle.machine_label = j["machine_label"].get<int>();
    }
    if (j.contains("expert_labels")) {
      if (!j["expert_labels"].is_array()) throw fail("expert_labels", "not an array");
      for (const auto& e : j["expert_labels"]) {
        if (!e.is_object() || !e.contains("annotator") || !e.contains("label"))
          throw fail("expert_labels", "entries need 'annotator' and 'label'");
        item.bundle.expert_labels.push_back({e["annotator"].get<std::string>(), e["label"].get<int>()});
      }
    }
    if (j.contains("er_label") && !j["er_label"].is_null()) {
      if (!j["er_label"].is_number_integer()) throw fail("er_label", "not an integer");
      item.er_label = j["er_label"].get<int>();
    }
    for (const char* key : {"valence", "arousal"}) {
      if (!j.contains(key)) continue;
      if (!j[key].is_object()) throw fail(key, "expected annotator -> rating object");
      auto& target = std::string_view(key) == "valence" ? item.valence : item.arousal;
      for (const auto& [name, v] : j[key].items()) {
        if (!v.is_number()) throw fail(key, "non-numeric rating");
        target[name] = v.get<double>();
      }
    }
  } catch (const json::exception& e) {
    throw DataError(where + e.what());
  }
  try {
    item.bundle.validate();
  } catch (const ParameterError& e) {
    throw ValidationError(where + e.what());
  }
  if (item.er_label && (*item.er_label < 0 || *item.er_label >= item.bundle.class_count))
    throw ValidationError(where + "er_label outside class range");
  return item;
}

std::vector<AnnotatedItem> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open annotations " + path.string());
  std::vector<AnnotatedItem> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(annotation_from_json_line(line, number));
  }
  return out;
}

std::string report_json(const AnnotationReport& report) {
  json j;
  j["fused_labels"] = report.fused;
  j["contested"] = report.contested;
  j["alpha"] = report.model.alpha;
  j["class_prior"] = report.model.class_prior;
  j["iterations"] = report.model.iterations;
  j["converged"] = report.model.converged;
  j["log_likelihood"] = report.model.log_likelihood;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  j["cronbach_alpha"] = {{"discrete", opt(report.cronbach_discrete)},
                         {"valence", opt(report.cronbach_valence)},
                         {"arousal", opt(report.cronbach_arousal)}};
  return j.dump(2);
}

}  // namespace emert::ala
