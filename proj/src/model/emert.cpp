// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "emert/model.hpp"

namespace emert::model {

using namespace emert::diff;

namespace {

using json = nlohmann::json;

constexpr const char* kCheckpointMagic = "EMERTCK1";
constexpr std::array<const char*, kModalities> kModalityTag = {"v", "e", "g"};

// Sample-major token layout from per-modality [B, S] rows.
Var interleave(std::span<const Var> parts, std::size_t batch) {
  const std::size_t t = parts.size();
  Var stacked = concat_rows(parts);  // row m*B + b
  std::vector<std::size_t> index(batch * t);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t m = 0; m < t; ++m) index[b * t + m] = m * batch + b;
  return gather_rows(stacked, std::move(index));
}

std::size_t seq_len(const data::SequenceDims& d, std::size_t m) {
  return m == 0 ? d.face_len : (m == 1 ? d.eyemove_len : d.fixation_len);
}
std::size_t seq_width(const data::SequenceDims& d, std::size_t m) {
  return m == 0 ? d.face_width : (m == 1 ? d.eyemove_width : d.fixation_width);
}

}  // namespace

std::size_t task_outputs(TaskMode mode) {
  switch (mode) {
    case TaskMode::kClassify3: return 3;
    case TaskMode::kClassify7: return 7;
    case TaskMode::kRegressVa: return 2;
    case TaskMode::kRegressIntensity: return 1;
  }
  return 0;
}

bool is_classification(TaskMode mode) {
  return mode == TaskMode::kClassify3 || mode == TaskMode::kClassify7;
}

const char* to_string(TaskMode mode) {
  switch (mode) {
    case TaskMode::kClassify3: return "classify3";
    case TaskMode::kClassify7: return "classify7";
    case TaskMode::kRegressVa: return "regress_va";
    case TaskMode::kRegressIntensity: return "regress_intensity";
  }
  return "?";
}

std::optional<TaskMode> parse_task_mode(const std::string& s) {
  for (TaskMode m : {TaskMode::kClassify3, TaskMode::kClassify7, TaskMode::kRegressVa,
                     TaskMode::kRegressIntensity})
    if (s == to_string(m)) return m;
  return std::nullopt;
}

void ModelConfig::validate() const {
  if (feature_width == 0 || ffn_width == 0 || disc_hidden == 0 || head_hidden == 0)
    throw ConfigError("layer widths must be positive");
  if (heads == 0 || feature_width % heads != 0)
    throw ConfigError("feature_width " + std::to_string(feature_width) + " not divisible by " +
                      std::to_string(heads) + " heads");
  if (layers == 0) throw ConfigError("need at least one fusion layer");
  if (!(alpha_adv >= 0.0) || !(beta_task >= 0.0)) throw ConfigError("loss weights must be >= 0");
  if (!(grl_lambda >= 0.0)) throw ConfigError("grl_lambda must be >= 0");
  if (!(huber_delta > 0.0)) throw ConfigError("huber_delta must be > 0");
  if (er_mode == TaskMode::kRegressIntensity)
    throw ConfigError("the ER view has no intensity label");
  if (!er_head && !fer_head) throw ConfigError("at least one prediction head must be enabled");
  if (std::none_of(modalities.begin(), modalities.end(), [](bool b) { return b; }))
    throw ConfigError("modality mask must be non-empty");
  if (dims.face_len == 0 || dims.eyemove_len == 0 || dims.fixation_len == 0 ||
      dims.face_width == 0 || dims.eyemove_width == 0 || dims.fixation_width == 0)
    throw ConfigError("sequence dimensions must be positive");
}

json to_json(const ModelConfig& c) {
  std::string mods;
  for (std::size_t m = 0; m < kModalities; ++m)
    if (c.modalities[m]) mods += "FEG"[m];
  return {{"feature_width", c.feature_width},
          {"ffn_width", c.ffn_width},
          {"layers", c.layers},
          {"heads", c.heads},
          {"disc_hidden", c.disc_hidden},
          {"head_hidden", c.head_hidden},
          {"grl_lambda", c.grl_lambda},
          {"alpha_adv", c.alpha_adv},
          {"beta_task", c.beta_task},
          {"huber_delta", c.huber_delta},
          {"layer_norm_eps", c.layer_norm_eps},
          {"er_mode", to_string(c.er_mode)},
          {"fer_mode", to_string(c.fer_mode)},
          {"er_head", c.er_head},
          {"fer_head", c.fer_head},
          {"use_mafd", c.use_mafd},
          {"use_emt", c.use_emt},
          {"modalities", mods},
          {"adv_target", c.adv_target == AdvTarget::kModality ? "modality" : "emotion"},
          {"face_len", c.dims.face_len},
          {"face_width", c.dims.face_width},
          {"eyemove_len", c.dims.eyemove_len},
          {"eyemove_width", c.dims.eyemove_width},
          {"fixation_len", c.dims.fixation_len},
          {"fixation_width", c.dims.fixation_width}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "feature_width") c.feature_width = v.get<std::size_t>();
      else if (key == "ffn_width") c.ffn_width = v.get<std::size_t>();
      else if (key == "layers") c.layers = v.get<std::size_t>();
      else if (key == "heads") c.heads = v.get<std::size_t>();
      else if (key == "disc_hidden") c.disc_hidden = v.get<std::size_t>();
      else if (key == "head_hidden") c.head_hidden = v.get<std::size_t>();
      else if (key == "grl_lambda") c.grl_lambda = v.get<double>();
      else if (key == "alpha_adv") c.alpha_adv = v.get<double>();
      else if (key == "beta_task") c.beta_task = v.get<double>();
      else if (key == "huber_delta") c.huber_delta = v.get<double>();
      else if (key == "layer_norm_eps") c.layer_norm_eps = v.get<double>();
      else if (key == "er_mode" || key == "fer_mode") {
        auto m = parse_task_mode(v.get<std::string>());
        if (!m) throw ConfigError("unknown task mode '" + v.get<std::string>() + "'");
        (key == "er_mode" ? c.er_mode : c.fer_mode) = *m;
      } else if (key == "er_head") c.er_head = v.get<bool>();
      else if (key == "fer_head") c.fer_head = v.get<bool>();
      else if (key == "use_mafd") c.use_mafd = v.get<bool>();
      else if (key == "use_emt") c.use_emt = v.get<bool>();
      else if (key == "modalities") {
        const auto s = v.get<std::string>();
        c.modalities = {false, false, false};
        for (char ch : s) {
          const auto pos = std::string("FEG").find(ch);
          if (pos == std::string::npos) throw ConfigError("unknown modality '" + std::string(1, ch) + "'");
          c.modalities[pos] = true;
        }
      } else if (key == "adv_target") {
        const auto s = v.get<std::string>();
        if (s == "modality") c.adv_target = AdvTarget::kModality;
        else if (s == "emotion") c.adv_target = AdvTarget::kEmotion;
        else throw ConfigError("unknown adv_target '" + s + "'");
      } else if (key == "face_len") c.dims.face_len = v.get<std::size_t>();
      else if (key == "face_width") c.dims.face_width = v.get<std::size_t>();
      else if (key == "eyemove_len") c.dims.eyemove_len = v.get<std::size_t>();
      else if (key == "eyemove_width") c.dims.eyemove_width = v.get<std::size_t>();
      else if (key == "fixation_len") c.dims.fixation_len = v.get<std::size_t>();
      else if (key == "fixation_width") c.dims.fixation_width = v.get<std::size_t>();
      else throw ConfigError("unknown model config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

Var Linear::operator()(const Var& x) const { return add_bias(matmul(x, w), b); }

Var Mlp2::operator()(const Var& x) const { return l2(relu(l1(x))); }

Emert::Emert(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), seed_(seed), init_state_(seed) {
  cfg_.validate();
  const std::size_t s = cfg_.feature_width;
  const auto& d = cfg_.dims;

  face_frame_ = make_linear("face.frame", d.face_width, s);
  face_conv_ = make_linear("face.conv", 3 * s, s);
  for (std::size_t m = 0; m < 2; ++m) {
    const std::string tag = m == 0 ? "eye" : "fix";
    const std::size_t in = seq_width(d, m + 1);
    std::mt19937_64 rng(init_state_++);
    auto xavier = [&](std::size_t fan_in, std::size_t fan_out, std::size_t rows, std::size_t cols) {
      std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
      Tensor t = Tensor::zeros(rows, cols);
      for (double& v : t.data()) v = nd(rng);
      return t;
    };
    lstm_wx_[m] = register_param(tag + ".lstm.wx", xavier(in, s, in, 4 * s));
    lstm_wh_[m] = register_param(tag + ".lstm.wh", xavier(s, s, s, 4 * s));
    Tensor bias = Tensor::zeros(1, 4 * s);
    for (std::size_t j = s; j < 2 * s; ++j) bias[j] = 1.0;  // forget gate
    lstm_b_[m] = register_param(tag + ".lstm.b", std::move(bias));
  }

  if (cfg_.use_mafd || cfg_.use_emt) {
    mlp_c_ = make_mlp("mlp_c", s, s, s);
    for (std::size_t m = 0; m < kModalities; ++m)
      mlp_p_[m] = make_mlp(std::string("mlp_") + kModalityTag[m], s, s, s);
  }
  if (cfg_.use_mafd) {
    const std::size_t classes =
        cfg_.adv_target == AdvTarget::kModality ? kModalities : data::kFineClasses;
    disc_ = make_mlp("disc", s, cfg_.disc_hidden, classes);
  }
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = "fusion." + std::to_string(l) + ".";
    FusionLayer f;
    f.q = make_linear(p + "q", s, s);
    f.k = make_linear(p + "k", s, s);
    f.v = make_linear(p + "v", s, s);
    f.o = make_linear(p + "o", s, s);
    f.ln1_g = register_param(p + "ln1.g", Tensor::filled({1, s}, 1.0));
    f.ln1_b = register_param(p + "ln1.b", Tensor::zeros(1, s));
    f.ff1 = make_linear(p + "ff1", s, cfg_.ffn_width);
    f.ff2 = make_linear(p + "ff2", cfg_.ffn_width, s);
    f.ln2_g = register_param(p + "ln2.g", Tensor::filled({1, s}, 1.0));
    f.ln2_b = register_param(p + "ln2.b", Tensor::zeros(1, s));
    fusion_.push_back(std::move(f));
  }
  er_head_ = make_mlp("head.er", s, cfg_.head_hidden, task_outputs(cfg_.er_mode));
  fer_head_ = make_mlp("head.fer", s, cfg_.head_hidden, task_outputs(cfg_.fer_mode));
}

Var Emert::register_param(const std::string& name, Tensor value) {
  Var v = parameter(std::move(value));
  params_.emplace_back(name, v);
  return v;
}

Linear Emert::make_linear(const std::string& name, std::size_t in, std::size_t out) {
  std::mt19937_64 rng(init_state_++);
  std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / static_cast<double>(in + out)));
  Tensor w = Tensor::zeros(in, out);
  for (double& v : w.data()) v = nd(rng);
  Linear l;
  l.w = register_param(name + ".w", std::move(w));
  l.b = register_param(name + ".b", Tensor::zeros(1, out));
  return l;
}

Mlp2 Emert::make_mlp(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out) {
  Mlp2 m;
  m.l1 = make_linear(name + ".l1", in, hidden);
  m.l2 = make_linear(name + ".l2", hidden, out);
  return m;
}

std::vector<Var> Emert::parameters() const {
  std::vector<Var> out;
  out.reserve(params_.size());
  for (const auto& [_, v] : params_) out.push_back(v);
  return out;
}

std::optional<Var> Emert::find_parameter(const std::string& name) const {
  for (const auto& [n, v] : params_)
    if (n == name) return v;
  return std::nullopt;
}

Var Emert::run_face(const Var& x, std::size_t batch, std::size_t steps) const {
  Var h = relu(face_frame_(x));
  const std::array<Var, 3> window = {group_shift(h, batch, steps, 1), h, group_shift(h, batch, steps, -1)};
  return relu(face_conv_(concat_cols(window)));
}

Var Emert::run_lstm(std::size_t m, const Var& x, std::size_t batch, std::size_t steps) const {
  const std::size_t s = cfg_.feature_width;
  Var xs = add_bias(matmul(x, lstm_wx_[m]), lstm_b_[m]);
  Var h = constant(Tensor::zeros(batch, s));
  Var c = constant(Tensor::zeros(batch, s));
  std::vector<Var> hs;
  hs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<std::size_t> rows(batch);
    for (std::size_t b = 0; b < batch; ++b) rows[b] = b * steps + t;
    Var gates = add(gather_rows(xs, std::move(rows)), matmul(h, lstm_wh_[m]));
    Var in = sigmoid(slice_cols(gates, 0, s));
    Var forget = sigmoid(slice_cols(gates, s, 2 * s));
    Var cand = tanh(slice_cols(gates, 2 * s, 3 * s));
    Var out = sigmoid(slice_cols(gates, 3 * s, 4 * s));
    c = add(mul(forget, c), mul(in, cand));
    h = mul(out, tanh(c));
    hs.push_back(h);
  }
  std::vector<std::size_t> order(batch * steps);  // time-major -> sample-major
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < steps; ++t) order[b * steps + t] = t * batch + b;
  return gather_rows(concat_rows(hs), std::move(order));
}

Encoded Emert::encode(const Batch& batch) const {
  const auto& d = cfg_.dims;
  const std::size_t s = cfg_.feature_width;
  const std::size_t n = batch.size;
  if (batch.face.cols() != d.face_width || batch.eyemove.cols() != d.eyemove_width ||
      batch.fixation.cols() != d.fixation_width)
    throw ConfigError("input widths do not match the model configuration");
  if (batch.face.rows() != n * d.face_len || batch.eyemove.rows() != n * d.eyemove_len ||
      batch.fixation.rows() != n * d.fixation_len)
    throw ConfigError("input sequence lengths do not match the model configuration");
  Encoded e;
  // A masked modality contributes a constant zero sequence, so its encoder
  // receives no gradient.
  e.h[0] = cfg_.modalities[0] ? run_face(constant(batch.face), n, d.face_len)
                              : constant(Tensor::zeros(n * d.face_len, s));
  e.h[1] = cfg_.modalities[1] ? run_lstm(0, constant(batch.eyemove), n, d.eyemove_len)
                              : constant(Tensor::zeros(n * d.eyemove_len, s));
  e.h[2] = cfg_.modalities[2] ? run_lstm(1, constant(batch.fixation), n, d.fixation_len)
                              : constant(Tensor::zeros(n * d.fixation_len, s));
  return e;
}

DecoupledFeatures Emert::decouple(const Encoded& enc, std::size_t batch) const {
  if (!mlp_c_.l1.w) throw ConfigError("decouple requires the decoupling extractors (MAFD or EMT)");
  DecoupledFeatures f;
  for (std::size_t m = 0; m < kModalities; ++m) {
    Var pooled = group_mean(enc.h[m], batch, seq_len(cfg_.dims, m));
    f.fc[m] = mlp_c_(pooled);
    f.fp[m] = mlp_p_[m](pooled);
  }
  return f;
}

AdversarialResult Emert::adversarial_loss(const DecoupledFeatures& dec, const Batch& batch) const {
  if (!has_discriminator()) throw ConfigError("adversarial loss requires MAFD");
  const std::size_t n = batch.size;
  Var generic = grad_reverse(concat_rows(dec.fc), cfg_.grl_lambda);
  Var unique = concat_rows(dec.fp);
  const std::array<Var, 2> both = {generic, unique};
  Var logits = disc_(concat_rows(both));

  std::vector<int> targets(2 * kModalities * n);
  for (std::size_t half = 0; half < 2; ++half)
    for (std::size_t m = 0; m < kModalities; ++m)
      for (std::size_t b = 0; b < n; ++b) {
        int t = static_cast<int>(m);
        if (cfg_.adv_target == AdvTarget::kEmotion) {
          const auto& l = *batch.labels[b];
          t = static_cast<int>(half == 0 ? l.fer_fine : l.er_fine);
        }
        targets[(half * kModalities + m) * n + b] = t;
      }

  AdversarialResult r;
  r.loss = cross_entropy(logits, targets);
  const Tensor& lv = logits.value();
  const std::size_t k = lv.cols();
  std::array<std::size_t, 2> hits = {0, 0};
  for (std::size_t row = 0; row < targets.size(); ++row) {
    const double* p = lv.ptr() + row * k;
    const auto arg = static_cast<int>(std::max_element(p, p + k) - p);
    if (arg == targets[row]) ++hits[row / (kModalities * n)];
  }
  r.acc_fc = static_cast<double>(hits[0]) / static_cast<double>(kModalities * n);
  r.acc_fp = static_cast<double>(hits[1]) / static_cast<double>(kModalities * n);
  return r;
}

Var Emert::fusion_layer(const FusionLayer& layer, const Var& queries, const Var& keys_values,
                        std::size_t batch, std::size_t tq, std::size_t tk, Tensor* weights) const {
  Var attended = attention(layer.q(queries), layer.k(keys_values), layer.v(keys_values), batch, tq,
                           tk, cfg_.heads, weights);
  Var x1 = layer_norm(add(queries, layer.o(attended)), layer.ln1_g, layer.ln1_b, cfg_.layer_norm_eps);
  Var ff = layer.ff2(relu(layer.ff1(x1)));
  return layer_norm(add(x1, ff), layer.ln2_g, layer.ln2_b, cfg_.layer_norm_eps);
}

Var Emert::fuse(const DecoupledFeatures& dec, std::size_t batch, Tensor* weights) const {
  Var x = interleave(dec.fc, batch);
  Var kv = interleave(dec.fp, batch);
  for (std::size_t l = 0; l < fusion_.size(); ++l)
    x = fusion_layer(fusion_[l], x, kv, batch, kModalities, kModalities,
                     l + 1 == fusion_.size() ? weights : nullptr);
  return group_mean(x, batch, kModalities);
}

Var Emert::fuse_plain(const Var& tokens, std::size_t batch, std::size_t tokens_per_sample) const {
  Var x = tokens;
  for (const auto& layer : fusion_)
    x = fusion_layer(layer, x, x, batch, tokens_per_sample, tokens_per_sample, nullptr);
  return group_mean(x, batch, tokens_per_sample);
}

Prediction Emert::heads(const Var& fused) const {
  Prediction p;
  if (cfg_.er_head) p.er_out = er_head_(fused);
  if (cfg_.fer_head) p.fer_out = fer_head_(fused);
  return p;
}

int class_target(const data::LabelSet& l, TaskMode mode, bool er_view) {
  if (mode == TaskMode::kClassify3) return static_cast<int>(er_view ? l.er_coarse : l.fer_coarse);
  if (mode == TaskMode::kClassify7) return static_cast<int>(er_view ? l.er_fine : l.fer_fine);
  throw ConfigError("class_target on a regression head");
}

std::vector<double> regression_target(const data::LabelSet& l, TaskMode mode, bool er_view) {
  auto check = [](double v, double lo, double hi, const char* field) {
    if (!(v >= lo && v <= hi))
      throw ValidationError(std::string(field) + " = " + std::to_string(v) + " outside legal range");
    return v;
  };
  if (mode == TaskMode::kRegressVa) {
    if (er_view) return {check(l.er_valence, -1, 1, "er_valence"), check(l.er_arousal, -1, 1, "er_arousal")};
    return {check(l.fer_valence, -1, 1, "fer_valence"), check(l.fer_arousal, -1, 1, "fer_arousal")};
  }
  if (mode == TaskMode::kRegressIntensity) {
    if (er_view) throw ConfigError("the ER view has no intensity label");
    return {check(l.fer_intensity, 0, 3, "fer_intensity")};
  }
  throw ConfigError("regression_target on a classification head");
}

TaskLosses Emert::task_losses(const Prediction& pred, const Batch& batch) const {
  auto head_loss = [&](const Var& out, TaskMode mode, bool er_view) {
    if (is_classification(mode)) {
      std::vector<int> targets;
      targets.reserve(batch.size);
      for (const auto* l : batch.labels) targets.push_back(class_target(*l, mode, er_view));
      return cross_entropy(out, targets);
    }
    Tensor target = Tensor::zeros(batch.size, task_outputs(mode));
    for (std::size_t b = 0; b < batch.size; ++b) {
      const auto t = regression_target(*batch.labels[b], mode, er_view);
      std::copy(t.begin(), t.end(), target.ptr() + b * t.size());
    }
    return huber(out, target, cfg_.huber_delta);
  };
  TaskLosses t;
  if (cfg_.er_head) t.er = head_loss(pred.er_out, cfg_.er_mode, true);
  if (cfg_.fer_head) t.fer = head_loss(pred.fer_out, cfg_.fer_mode, false);
  return t;
}

Var Emert::total_loss(const Var& adv, const TaskLosses& task) const {
  Var tasks;
  if (task.er && task.fer) tasks = add(task.er, task.fer);
  else tasks = task.er ? task.er : task.fer;
  Var total;
  if (tasks) total = scale(tasks, cfg_.beta_task);
  if (adv) {
    Var weighted = scale(adv, cfg_.alpha_adv);
    total = total ? add(weighted, total) : weighted;
  }
  if (!total) throw ContractError("total_loss with no active terms");
  return total;
}

ForwardResult Emert::forward(const Batch& batch, bool with_loss) const {
  ForwardResult r;
  const std::size_t n = batch.size;
  r.encoded = encode(batch);
  if (cfg_.use_mafd || cfg_.use_emt) r.decoupled = decouple(r.encoded, n);
  if (cfg_.use_emt) {
    r.fused = fuse(*r.decoupled, n);
  } else if (cfg_.use_mafd) {
    std::vector<Var> tokens(r.decoupled->fc.begin(), r.decoupled->fc.end());
    tokens.insert(tokens.end(), r.decoupled->fp.begin(), r.decoupled->fp.end());
    r.fused = fuse_plain(interleave(tokens, n), n, tokens.size());
  } else {
    std::array<Var, kModalities> pooled;
    for (std::size_t m = 0; m < kModalities; ++m)
      pooled[m] = group_mean(r.encoded.h[m], n, seq_len(cfg_.dims, m));
    r.fused = fuse_plain(interleave(pooled, n), n, kModalities);
  }
  if (cfg_.use_mafd) r.adversarial = adversarial_loss(*r.decoupled, batch);
  r.prediction = heads(r.fused);
  if (with_loss) {
    r.task = task_losses(r.prediction, batch);
    r.total = total_loss(r.adversarial ? r.adversarial->loss : Var(), r.task);
  }
  return r;
}

Batch make_batch(const std::vector<data::MultimodalSample>& samples,
                 const std::vector<std::size_t>& indices, const ModelConfig& cfg,
                 double noise_variance, std::uint64_t noise_seed) {
  if (indices.empty()) throw ContractError("empty batch");
  if (noise_variance < 0.0) throw ParameterError("noise variance must be >= 0");
  const auto& d = cfg.dims;
  Batch b;
  b.size = indices.size();
  b.face = Tensor::zeros(b.size * d.face_len, d.face_width);
  b.eyemove = Tensor::zeros(b.size * d.eyemove_len, d.eyemove_width);
  b.fixation = Tensor::zeros(b.size * d.fixation_len, d.fixation_width);
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, std::sqrt(noise_variance));
  auto copy = [&](Tensor& dst, const Tensor& src, std::size_t slot, std::size_t len,
                  std::size_t width, bool enabled, const std::string& id) {
    if (src.rows() != len || src.cols() != width)
      throw DataError("sample '" + id + "' has sequence shape " + diff::shape_string(src.shape()) +
                      ", model expects [" + std::to_string(len) + "x" + std::to_string(width) + "]");
    double* out = dst.ptr() + slot * len * width;
    for (std::size_t i = 0; i < len * width; ++i) {
      const double eps = noise_variance > 0.0 ? noise(rng) : 0.0;
      out[i] = enabled ? src[i] + eps : 0.0;
    }
  };
  for (std::size_t slot = 0; slot < indices.size(); ++slot) {
    const auto& s = samples.at(indices[slot]);
    copy(b.face, s.face_seq, slot, d.face_len, d.face_width, cfg.modalities[0], s.sample_id);
    copy(b.eyemove, s.eyemove_seq, slot, d.eyemove_len, d.eyemove_width, cfg.modalities[1], s.sample_id);
    copy(b.fixation, s.fixation_seq, slot, d.fixation_len, d.fixation_width, cfg.modalities[2], s.sample_id);
    b.labels.push_back(&s.labels);
    b.ids.push_back(s.sample_id);
  }
  return b;
}

void Emert::save(const std::filesystem::path& path) const {
  static_assert(std::endian::native == std::endian::little, "checkpoints are little-endian");
  json header;
  header["format"] = kCheckpointMagic;
  header["seed"] = seed_;
  header["config"] = to_json(cfg_);
  header["params"] = json::array();
  for (const auto& [name, v] : params_) header["params"].push_back({{"name", name}, {"shape", v.shape()}});
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << kCheckpointMagic << '\n' << header.dump() << '\n';
  for (const auto& [_, v] : params_)
    out.write(reinterpret_cast<const char*>(v.value().ptr()),
              static_cast<std::streamsize>(v.value().size() * sizeof(double)));
  if (!out) throw DataError("checkpoint write failed: " + path.string());
}

Emert Emert::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::string magic, header_line;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) throw DataError(path.string() + " is not an EMERT checkpoint");
  std::getline(in, header_line);
  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::exception& e) {
    throw DataError("checkpoint header: " + std::string(e.what()));
  }
  Emert m(model_config_from_json(header.at("config")), header.at("seed").get<std::uint64_t>());
  const auto& listed = header.at("params");
  if (listed.size() != m.params_.size()) throw DataError("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < listed.size(); ++i) {
    auto& [name, v] = m.params_[i];
    if (listed[i].at("name").get<std::string>() != name ||
        listed[i].at("shape").get<Shape>() != v.shape())
      throw DataError("checkpoint parameter " + std::to_string(i) + " does not match '" + name + "'");
    in.read(reinterpret_cast<char*>(v.value().ptr()),
            static_cast<std::streamsize>(v.value().size() * sizeof(double)));
    if (!in) throw DataError("checkpoint truncated at '" + name + "'");
  }
  return m;
}

}  // namespace emert::model
