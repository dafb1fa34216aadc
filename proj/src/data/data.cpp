// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "emert/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "emert/error.hpp"
#include "emert/log.hpp"

namespace emert::data {
namespace {

using json = nlohmann::json;

constexpr std::array<std::string_view, kCoarseClasses> kCoarseNames = {"positive", "negative",
                                                                        "neutral"};
constexpr std::array<std::string_view, kFineClasses> kFineNames = {
    "happiness", "sadness", "fear", "surprise", "disgust", "anger", "neutral"};

// Circumplex placement of each fine class: (valence, arousal).
constexpr std::array<std::array<double, 2>, kFineClasses> kAffect = {{
    {0.8, 0.5},    // happiness
    {-0.7, -0.4},  // sadness
    {-0.6, 0.7},   // fear
    {0.3, 0.8},    // surprise
    {-0.7, 0.3},   // disgust
    {-0.6, 0.8},   // anger
    {0.0, 0.0},    // neutral
}};
constexpr std::array<double, kFineClasses> kIntensity = {2.0, 1.6, 1.8, 2.2, 1.7, 2.1, 0.4};

constexpr double kAffectJitter = 0.15;
constexpr double kIntensityJitter = 0.5;
constexpr double kTemporalCorrelation = 0.7;

void check_range(double v, double lo, double hi, const char* field) {
  if (!(v >= lo && v <= hi))
    throw ValidationError(std::string(field) + " = " + std::to_string(v) + " outside [" +
                          std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

// prototype + AR(1) noise with unit marginal variance
Tensor class_sequence(const std::vector<double>& prototype, std::size_t len, std::mt19937_64& rng) {
  const std::size_t width = prototype.size();
  Tensor seq = Tensor::zeros(len, width);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double innov = std::sqrt(1.0 - kTemporalCorrelation * kTemporalCorrelation);
  std::vector<double> state(width);
  for (double& s : state) s = normal(rng);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t c = 0; c < width; ++c) {
      if (t > 0) state[c] = kTemporalCorrelation * state[c] + innov * normal(rng);
      seq.at(t, c) = prototype[c] + state[c];
    }
  }
  return seq;
}

using Prototypes = std::vector<std::vector<double>>;

Prototypes make_prototypes(std::size_t width, double signal, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, signal);
  Prototypes protos(kFineClasses, std::vector<double>(width));
  for (auto& p : protos)
    for (double& v : p) v = normal(rng);
  return protos;
}

json tensor_json(const Tensor& t) { return json(t.storage()); }

Tensor tensor_from(const json& rec, const char* field, const json& shape, std::size_t line) {
  auto fail = [&](const std::string& why) {
    return DataError("line " + std::to_string(line) + ": field '" + field + "': " + why);
  };
  if (!rec.contains(field) || !rec[field].is_array()) throw fail("missing or not an array");
  if (!shape.is_array() || shape.size() != 2) throw fail("shape must be [rows, cols]");
  std::vector<double> values;
  values.reserve(rec[field].size());
  for (const auto& v : rec[field]) {
    if (!v.is_number()) throw fail("non-numeric entry");
    values.push_back(v.get<double>());
  }
  const auto rows = shape[0].get<std::size_t>();
  const auto cols = shape[1].get<std::size_t>();
  if (rows == 0 || cols == 0 || rows * cols != values.size())
    throw fail("shape " + shape.dump() + " does not match " + std::to_string(values.size()) +
               " values");
  Tensor t({rows, cols}, std::move(values));
  if (!t.all_finite()) throw fail("non-finite value");
  return t;
}

}  // namespace

std::string_view to_string(Coarse c) { return kCoarseNames[static_cast<std::size_t>(c)]; }
std::string_view to_string(Fine f) { return kFineNames[static_cast<std::size_t>(f)]; }

std::optional<Coarse> parse_coarse(std::string_view s) {
  for (std::size_t i = 0; i < kCoarseNames.size(); ++i)
    if (kCoarseNames[i] == s) return static_cast<Coarse>(i);
  return std::nullopt;
}

std::optional<Fine> parse_fine(std::string_view s) {
  for (std::size_t i = 0; i < kFineNames.size(); ++i)
    if (kFineNames[i] == s) return static_cast<Fine>(i);
  return std::nullopt;
}

Coarse CoarseMapping::operator()(Fine f) const {
  switch (f) {
    case Fine::kHappiness: return Coarse::kPositive;
    case Fine::kSurprise: return surprise_positive ? Coarse::kPositive : Coarse::kNegative;
    case Fine::kSadness:
    case Fine::kFear:
    case Fine::kDisgust:
    case Fine::kAnger: return Coarse::kNegative;
    case Fine::kNeutral: return Coarse::kNeutral;
  }
  return Coarse::kNeutral;
}

void LabelSet::validate(const CoarseMapping& mapping) const {
  check_range(er_valence, -1.0, 1.0, "er_valence");
  check_range(er_arousal, -1.0, 1.0, "er_arousal");
  check_range(fer_valence, -1.0, 1.0, "fer_valence");
  check_range(fer_arousal, -1.0, 1.0, "fer_arousal");
  check_range(fer_intensity, 0.0, 3.0, "fer_intensity");
  if (mapping(er_fine) != er_coarse)
    throw ValidationError("er_coarse '" + std::string(to_string(er_coarse)) +
                          "' inconsistent with er_fine '" + std::string(to_string(er_fine)) + "'");
  if (mapping(fer_fine) != fer_coarse)
    throw ValidationError("fer_coarse '" + std::string(to_string(fer_coarse)) +
                          "' inconsistent with fer_fine '" + std::string(to_string(fer_fine)) + "'");
}

LabelSet make_labels(Fine er, Fine fer, const CoarseMapping& mapping) {
  LabelSet l;
  l.er_fine = er;
  l.fer_fine = fer;
  l.er_coarse = mapping(er);
  l.fer_coarse = mapping(fer);
  return l;
}

const std::array<std::array<double, kFineClasses>, kFineClasses>& gap_kernel() {
  // Displayed expression given a different felt emotion: masking toward
  // neutral or a smile dominates, remaining mass spread evenly.
  static const auto kernel = [] {
    std::array<std::array<double, kFineClasses>, kFineClasses> k{};
    const auto happy = static_cast<std::size_t>(Fine::kHappiness);
    const auto neutral = static_cast<std::size_t>(Fine::kNeutral);
    for (std::size_t er = 0; er < kFineClasses; ++er) {
      for (std::size_t fer = 0; fer < kFineClasses; ++fer) k[er][fer] = er == fer ? 0.0 : 1.0;
      if (er == neutral) {
        k[er][happy] = 6.0;
      } else if (er == happy) {
        k[er][neutral] = 6.0;
      } else {
        k[er][neutral] = 5.0;
        k[er][happy] = 3.0;
      }
      const double total = std::accumulate(k[er].begin(), k[er].end(), 0.0);
      for (double& v : k[er]) v /= total;
    }
    return k;
  }();
  return kernel;
}

std::vector<MultimodalSample> generate_synthetic(std::size_t n, const GapSpec& spec,
                                                 const SequenceDims& dims) {
  if (n == 0) throw ParameterError("generate_synthetic needs n > 0");
  if (!(spec.gap_rate >= 0.0 && spec.gap_rate <= 1.0))
    throw ParameterError("gap_rate must lie in [0,1]");
  double prior_sum = 0.0;
  for (double p : spec.class_priors) {
    if (!(p >= 0.0)) throw ParameterError("class priors must be non-negative");
    prior_sum += p;
  }
  if (std::abs(prior_sum - 1.0) > 1e-9) throw ParameterError("class priors must sum to 1");
  if (!(spec.signal > 0.0)) throw ParameterError("signal must be positive");

  std::mt19937_64 world(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  const Prototypes face = make_prototypes(dims.face_width, spec.signal, world);
  const Prototypes eye = make_prototypes(dims.eyemove_width, spec.signal, world);
  const Prototypes fix = make_prototypes(dims.fixation_width, spec.signal, world);

  std::mt19937_64 rng(spec.seed);
  std::discrete_distribution<int> prior(spec.class_priors.begin(), spec.class_priors.end());
  std::bernoulli_distribution gap(spec.gap_rate);
  std::uniform_real_distribution<double> affect_jitter(-kAffectJitter, kAffectJitter);
  std::uniform_real_distribution<double> intensity_jitter(-kIntensityJitter, kIntensityJitter);

  std::vector<MultimodalSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int er = prior(rng);
    int fer = er;
    if (gap(rng)) {
      const auto& row = gap_kernel()[static_cast<std::size_t>(er)];
      std::discrete_distribution<int> mask(row.begin(), row.end());
      fer = mask(rng);
    }
    MultimodalSample s;
    s.sample_id = "syn-" + std::to_string(spec.seed) + "-" + std::to_string(i);
    s.labels = make_labels(static_cast<Fine>(er), static_cast<Fine>(fer), spec.mapping);
    const auto ue = static_cast<std::size_t>(er);
    const auto uf = static_cast<std::size_t>(fer);
    s.labels.er_valence = std::clamp(kAffect[ue][0] + affect_jitter(rng), -1.0, 1.0);
    s.labels.er_arousal = std::clamp(kAffect[ue][1] + affect_jitter(rng), -1.0, 1.0);
    s.labels.fer_valence = std::clamp(kAffect[uf][0] + affect_jitter(rng), -1.0, 1.0);
    s.labels.fer_arousal = std::clamp(kAffect[uf][1] + affect_jitter(rng), -1.0, 1.0);
    s.labels.fer_intensity = std::clamp(kIntensity[uf] + intensity_jitter(rng), 0.0, 3.0);
    s.face_seq = class_sequence(face[uf], dims.face_len, rng);
    s.eyemove_seq = class_sequence(eye[ue], dims.eyemove_len, rng);
    s.fixation_seq = class_sequence(fix[ue], dims.fixation_len, rng);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::size_t> DatasetSplit::train_indices(int fold) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] != fold) idx.push_back(i);
  return idx;
}

std::vector<std::size_t> DatasetSplit::test_indices(int fold) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] == fold) idx.push_back(i);
  return idx;
}

DatasetSplit kfold_split(const std::vector<MultimodalSample>& samples, std::size_t k,
                         std::uint64_t seed) {
  if (k < 2) throw ParameterError("k-fold needs k >= 2");
  if (k > samples.size())
    throw ParameterError("k = " + std::to_string(k) + " exceeds " +
                         std::to_string(samples.size()) + " samples");
  std::mt19937_64 rng(seed);
  std::array<std::vector<std::size_t>, kFineClasses> by_class;
  for (std::size_t i = 0; i < samples.size(); ++i)
    by_class[static_cast<std::size_t>(samples[i].labels.er_fine)].push_back(i);
  const bool stratify = std::all_of(by_class.begin(), by_class.end(), [k](const auto& members) {
    return members.empty() || members.size() >= k;
  });

  // Dealing one ordered list round-robin keeps fold sizes within one.
  std::vector<std::size_t> order;
  order.reserve(samples.size());
  if (stratify) {
    for (auto& members : by_class) {
      std::shuffle(members.begin(), members.end(), rng);
      order.insert(order.end(), members.begin(), members.end());
    }
  } else {
    log_warning("kfold_split: some er_fine class has fewer than " + std::to_string(k) +
                " members; using unstratified folds");
    order.resize(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
  }

  DatasetSplit split;
  split.fold_count = k;
  split.stratified = stratify;
  split.fold_of.assign(samples.size(), -1);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const int fold = static_cast<int>(pos % k);
    split.fold_of[order[pos]] = fold;
    split.assignments[samples[order[pos]].sample_id] = fold;
  }
  return split;
}

std::string sample_to_json_line(const MultimodalSample& s) {
  json rec;
  rec["sample_id"] = s.sample_id;
  rec["shapes"] = {{"face", s.face_seq.shape()},
                   {"eyemove", s.eyemove_seq.shape()},
                   {"fixation", s.fixation_seq.shape()}};
  rec["face"] = tensor_json(s.face_seq);
  rec["eyemove"] = tensor_json(s.eyemove_seq);
  rec["fixation"] = tensor_json(s.fixation_seq);
  const LabelSet& l = s.labels;
  rec["labels"] = {{"er_coarse", to_string(l.er_coarse)},   {"er_fine", to_string(l.er_fine)},
                   {"fer_coarse", to_string(l.fer_coarse)}, {"fer_fine", to_string(l.fer_fine)},
                   {"er_valence", l.er_valence},            {"er_arousal", l.er_arousal},
                   {"fer_valence", l.fer_valence},          {"fer_arousal", l.fer_arousal},
                   {"fer_intensity", l.fer_intensity}};
  return rec.dump();
}

MultimodalSample sample_from_json_line(std::string_view line, std::size_t line_number,
                                       const CoarseMapping& mapping) {
  const std::string where = "line " + std::to_string(line_number) + ": ";
  json rec;
  try {
    rec = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(where + "invalid JSON: " + e.what());
  }
  if (!rec.is_object()) throw DataError(where + "record is not an object");
  auto field_error = [&](const std::string& field, const std::string& why) {
    return DataError(where + "field '" + field + "': " + why);
  };

  MultimodalSample s;
  if (!rec.contains("sample_id") || !rec["sample_id"].is_string())
    throw field_error("sample_id", "missing or not a string");
  s.sample_id = rec["sample_id"].get<std::string>();
  if (!rec.contains("shapes") || !rec["shapes"].is_object())
    throw field_error("shapes", "missing or not an object");
  const json& shapes = rec["shapes"];
  for (const char* key : {"face", "eyemove", "fixation"})
    if (!shapes.contains(key)) throw field_error(std::string("shapes.") + key, "missing");
  try {
    s.face_seq = tensor_from(rec, "face", shapes["face"], line_number);
    s.eyemove_seq = tensor_from(rec, "eyemove", shapes["eyemove"], line_number);
    s.fixation_seq = tensor_from(rec, "fixation", shapes["fixation"], line_number);
  } catch (const json::exception& e) {
    throw field_error("shapes", e.what());
  }

  if (!rec.contains("labels") || !rec["labels"].is_object())
    throw field_error("labels", "missing or not an object");
  const json& lj = rec["labels"];
  auto get_str = [&](const char* f) {
    if (!lj.contains(f) || !lj[f].is_string()) throw field_error(f, "missing or not a string");
    return lj[f].get<std::string>();
  };
  auto get_num = [&](const char* f) {
    if (!lj.contains(f) || !lj[f].is_number()) throw field_error(f, "missing or not a number");
    return lj[f].get<double>();
  };
  auto coarse = [&](const char* f) {
    auto c = parse_coarse(get_str(f));
    if (!c) throw ValidationError(where + f + ": unknown coarse label");
    return *c;
  };
  auto fine = [&](const char* f) {
    auto c = parse_fine(get_str(f));
    if (!c) throw ValidationError(where + f + ": unknown fine label");
    return *c;
  };
  LabelSet& l = s.labels;
  l.er_coarse = coarse("er_coarse");
  l.er_fine = fine("er_fine");
  l.fer_coarse = coarse("fer_coarse");
  l.fer_fine = fine("fer_fine");
  l.er_valence = get_num("er_valence");
  l.er_arousal = get_num("er_arousal");
  l.fer_valence = get_num("fer_valence");
  l.fer_arousal = get_num("fer_arousal");
  l.fer_intensity = get_num("fer_intensity");
  try {
    l.validate(mapping);
  } catch (const ValidationError& e) {
    throw ValidationError(where + e.what());
  }
  return s;
}

std::vector<MultimodalSample> load_dataset(const std::filesystem::path& path,
                                           const CoarseMapping& mapping) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  std::vector<MultimodalSample> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(sample_from_json_line(line, number, mapping));
  }
  return out;
}

void save_dataset(const std::vector<MultimodalSample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset " + path.string());
  for (const auto& s : samples) out << sample_to_json_line(s) << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace emert::data
