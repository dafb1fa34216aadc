// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <charconv>
#include <fstream>
#include <sstream>

#include "emert/harness.hpp"

namespace emert::harness {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError("'" + v + "' is not a number");
  return d;
}

std::uint64_t to_uint(const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("'" + v + "' is not a non-negative integer");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("'" + v + "' is not a boolean");
}

std::vector<double> to_list(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(trim(item)));
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

std::array<bool, 3> to_mask(const std::string& v) {
  std::array<bool, 3> mask = {false, false, false};
  for (char c : v) {
    const auto pos = std::string("FEG").find(c);
    if (pos == std::string::npos) throw ConfigError("unknown modality '" + std::string(1, c) + "' (use F, E, G)");
    mask[pos] = true;
  }
  return mask;
}

// Keys forwarded to the model config as JSON; the value kind decides the type.
enum class Kind { kUint, kDouble, kBool, kString };
const std::map<std::string, Kind>& model_keys() {
  static const std::map<std::string, Kind> keys = {
      {"feature_width", Kind::kUint}, {"ffn_width", Kind::kUint},       {"layers", Kind::kUint},
      {"heads", Kind::kUint},         {"disc_hidden", Kind::kUint},     {"head_hidden", Kind::kUint},
      {"grl_lambda", Kind::kDouble},  {"huber_delta", Kind::kDouble},   {"layer_norm_eps", Kind::kDouble},
      {"er_head", Kind::kBool},       {"fer_head", Kind::kBool},        {"adv_target", Kind::kString},
      {"face_len", Kind::kUint},      {"face_width", Kind::kUint},      {"eyemove_len", Kind::kUint},
      {"eyemove_width", Kind::kUint}, {"fixation_len", Kind::kUint},    {"fixation_width", Kind::kUint}};
  return keys;
}

void apply(Settings& s, const std::string& key, const std::string& v, nlohmann::json& model_overrides) {
  auto& spec = s.spec;
  if (key == "protocol") {
    const auto p = parse_protocol(v);
    if (!p) throw ConfigError("unknown protocol '" + v + "'");
    spec.protocol = *p;
  } else if (key == "modalities") spec.modalities = to_mask(v);
  else if (key == "modules") {
    spec.use_mafd = v.find("MAFD") != std::string::npos;
    spec.use_emt = v.find("EMT") != std::string::npos;
    if (v != "baseline" && !spec.use_mafd && !spec.use_emt) throw ConfigError("modules must name MAFD and/or EMT, or be 'baseline'");
  } else if (key == "use_mafd") spec.use_mafd = to_bool(v);
  else if (key == "use_emt") spec.use_emt = to_bool(v);
  else if (key == "multi_task") spec.multi_task = to_bool(v);
  else if (key == "noise_variance") spec.noise_variance = to_double(v);
  else if (key == "alpha_adv") spec.alpha_adv = to_double(v);
  else if (key == "beta_task") spec.beta_task = to_double(v);
  else if (key == "folds") spec.folds = to_uint(v);
  else if (key == "seed") spec.seed = to_uint(v);
  else if (key == "label") spec.label = v;
  else if (key == "epochs") spec.train.epochs = to_uint(v);
  else if (key == "batch_size") spec.train.batch_size = to_uint(v);
  else if (key == "learning_rate") spec.train.learning_rate = to_double(v);
  else if (key == "momentum") spec.train.momentum = to_double(v);
  else if (key == "train_noise_variance") spec.train.train_noise_variance = to_double(v);
  else if (key == "samples") s.generate.samples = to_uint(v);
  else if (key == "gap_rate") s.generate.gap_rate = to_double(v);
  else if (key == "signal") s.generate.signal = to_double(v);
  else if (key == "surprise_positive") s.generate.surprise_positive = to_bool(v);
  else if (key == "variances") s.variances = to_list(v);
  else if (key == "alphas") s.alphas = to_list(v);
  else if (key == "betas") s.betas = to_list(v);
  else if (auto it = model_keys().find(key); it != model_keys().end()) {
    switch (it->second) {
      case Kind::kUint: model_overrides[key] = to_uint(v); break;
      case Kind::kDouble: model_overrides[key] = to_double(v); break;
      case Kind::kBool: model_overrides[key] = to_bool(v); break;
      case Kind::kString: model_overrides[key] = v; break;
    }
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}

}  // namespace

Settings parse_settings(std::string_view text, Settings base) {
  Settings s = std::move(base);
  nlohmann::json overrides = model::to_json(s.spec.model);
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    try {
      apply(s, key, value, overrides);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(number) + ": " + key + ": " + e.what());
    }
  }
  s.spec.model = model::model_config_from_json(overrides);
  if (s.generate.gap_rate < 0.0 || s.generate.gap_rate > 1.0) throw ConfigError("gap_rate must be in [0, 1]");
  if (s.generate.samples == 0) throw ConfigError("samples must be positive");
  if (s.spec.train.epochs == 0 || s.spec.train.batch_size == 0) throw ConfigError("epochs and batch_size must be positive");
  if (!(s.spec.train.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  return s;
}

Settings load_settings(const std::filesystem::path& path, Settings base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_settings(buf.str(), std::move(base));
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw DataError("CSV has no column '" + std::string(name) + "'");
}

CsvTable read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') cell += line[++i];
        else if (c == '"') quoted = false;
        else cell += c;
      } else if (c == '"') quoted = true;
      else if (c == ',') {
        cells.push_back(cell);
        cell.clear();
      } else if (c != '\r') cell += c;
    }
    cells.push_back(cell);
    return cells;
  };
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + " is empty");
  t.header = split(line);
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size())
      throw DataError(path.string() + " line " + std::to_string(number) + ": expected " +
                      std::to_string(t.header.size()) + " cells, got " + std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

}  // namespace emert::harness
