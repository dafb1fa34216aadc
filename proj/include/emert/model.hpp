// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "emert/autodiff.hpp"
#include "emert/data.hpp"
#include "emert/error.hpp"

#include <json.hpp>

namespace emert::model {

using diff::Tensor;
using diff::Var;

enum class TaskMode { kClassify3, kClassify7, kRegressVa, kRegressIntensity };
enum class AdvTarget { kModality, kEmotion };
enum class Modality : std::size_t { kFace = 0, kEye = 1, kFixation = 2 };
inline constexpr std::size_t kModalities = 3;

std::size_t task_outputs(TaskMode mode);
bool is_classification(TaskMode mode);
const char* to_string(TaskMode mode);
std::optional<TaskMode> parse_task_mode(const std::string& s);

struct ModelConfig {
  std::size_t feature_width = 64;  // S
  std::size_t ffn_width = 128;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t disc_hidden = 32;
  std::size_t head_hidden = 32;
  double grl_lambda = 1.0;
  double alpha_adv = 0.3;
  double beta_task = 0.1;
  double huber_delta = 1.0;
  double layer_norm_eps = 1e-5;
  TaskMode er_mode = TaskMode::kClassify3;
  TaskMode fer_mode = TaskMode::kClassify3;
  bool er_head = true;   // disabling drops L_e from the objective
  bool fer_head = true;  // disabling drops L_f from the objective
  bool use_mafd = true;  // decoupling MLPs + adversarial discriminator
  bool use_emt = true;   // F_C-queried cross-attention; otherwise plain self-attention
  std::array<bool, kModalities> modalities = {true, true, true};  // F, E, G
  AdvTarget adv_target = AdvTarget::kModality;
  data::SequenceDims dims;

  // Throws ConfigError.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
// Missing keys keep their defaults; unknown keys are a ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j);

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 16;
  double learning_rate = 0.02;
  double momentum = 0.9;
  double train_noise_variance = 0.0;
};

// One mini-batch laid out sample-major: row b*T + t is frame t of sample b.
struct Batch {
  std::size_t size = 0;
  Tensor face, eyemove, fixation;
  std::vector<const data::LabelSet*> labels;
  std::vector<std::string> ids;
};

// `noise_variance` > 0 adds zero-mean Gaussian noise to every modality
// (drawn from `rng`). Masked modalities are zeroed.
Batch make_batch(const std::vector<data::MultimodalSample>& samples,
                 const std::vector<std::size_t>& indices, const ModelConfig& cfg,
                 double noise_variance = 0.0, std::uint64_t noise_seed = 0);

struct Encoded {
  std::array<Var, kModalities> h;  // [B*T_m, S]
};

struct DecoupledFeatures {
  std::array<Var, kModalities> fc;  // emotion-generic, [B, S] each
  std::array<Var, kModalities> fp;  // emotion-unique,  [B, S] each
};

struct Prediction {
  Var er_out;
  Var fer_out;
};

struct AdversarialResult {
  Var loss;
  double acc_fc = 0.0;
  double acc_fp = 0.0;
};

struct TaskLosses {
  Var er;   // empty when the ER head is disabled
  Var fer;  // empty when the FER head is disabled
};

struct ForwardResult {
  Encoded encoded;
  std::optional<DecoupledFeatures> decoupled;
  Var fused;  // X_fu, [B, S]
  Prediction prediction;
  std::optional<AdversarialResult> adversarial;
  TaskLosses task;
  Var total;
};

struct Linear {
  Var w, b;
  Var operator()(const Var& x) const;
};

struct Mlp2 {
  Linear l1, l2;
  Var operator()(const Var& x) const;
};

struct FusionLayer {
  Linear q, k, v, o, ff1, ff2;
  Var ln1_g, ln1_b, ln2_g, ln2_b;
};

class Emert {
 public:
  Emert(ModelConfig cfg, std::uint64_t seed);
  // Parameters are shared handles; copying would alias them.
  Emert(const Emert&) = delete;
  Emert& operator=(const Emert&) = delete;
  Emert(Emert&&) = default;
  Emert& operator=(Emert&&) = default;

  const ModelConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }

  Encoded encode(const Batch& batch) const;
  DecoupledFeatures decouple(const Encoded& enc, std::size_t batch) const;
  // Modality discriminator loss over GRL(F_C) and F_P rows, mean over rows.
  AdversarialResult adversarial_loss(const DecoupledFeatures& dec, const Batch& batch) const;
  // Attention probabilities of the last layer are written to `weights` when given.
  Var fuse(const DecoupledFeatures& dec, std::size_t batch, Tensor* weights = nullptr) const;
  // Plain self-attention over the given tokens ([B*T, S], sample-major).
  Var fuse_plain(const Var& tokens, std::size_t batch, std::size_t tokens_per_sample) const;
  Prediction heads(const Var& fused) const;
  TaskLosses task_losses(const Prediction& pred, const Batch& batch) const;
  Var total_loss(const Var& adv, const TaskLosses& task) const;

  ForwardResult forward(const Batch& batch, bool with_loss = true) const;

  const std::vector<std::pair<std::string, Var>>& named_parameters() const { return params_; }
  std::vector<Var> parameters() const;
  std::optional<Var> find_parameter(const std::string& name) const;
  bool has_discriminator() const { return static_cast<bool>(disc_.l1.w); }

  // Flat named-parameter checkpoint with a JSON header.
  void save(const std::filesystem::path& path) const;
  static Emert load(const std::filesystem::path& path);

 private:
  Var register_param(const std::string& name, Tensor value);
  Linear make_linear(const std::string& name, std::size_t in, std::size_t out);
  Mlp2 make_mlp(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out);
  Var run_lstm(std::size_t m, const Var& x, std::size_t batch, std::size_t steps) const;
  Var run_face(const Var& x, std::size_t batch, std::size_t steps) const;
  Var fusion_layer(const FusionLayer& layer, const Var& queries, const Var& keys_values,
                   std::size_t batch, std::size_t tq, std::size_t tk, Tensor* weights) const;

  ModelConfig cfg_;
  std::uint64_t seed_;
  std::uint64_t init_state_;
  std::vector<std::pair<std::string, Var>> params_;

  Linear face_frame_, face_conv_;
  std::array<Var, 2> lstm_wx_, lstm_wh_, lstm_b_;  // eye, fixation
  Mlp2 mlp_c_;
  std::array<Mlp2, kModalities> mlp_p_;
  Mlp2 disc_;
  std::vector<FusionLayer> fusion_;
  Mlp2 er_head_, fer_head_;
};

// Integer class target for a classification head.
int class_target(const data::LabelSet& labels, TaskMode mode, bool er_view);
// Regression targets for a regression head.
std::vector<double> regression_target(const data::LabelSet& labels, TaskMode mode, bool er_view);

struct EpochLog {
  std::size_t epoch = 0;
  double l_adv = 0.0, l_e = 0.0, l_f = 0.0, total = 0.0;
  double disc_acc_fc = 0.0, disc_acc_fp = 0.0;
  double learning_rate = 0.0;
  // Held-out metrics of the primary (ER) head when a validation set is given.
  std::optional<double> val_war, val_uar, val_f1, val_mae, val_mse, val_rmse;
};

struct TrainingLog {
  std::vector<EpochLog> epochs;
  std::string to_csv() const;
};

struct TrainOptions {
  const std::vector<std::size_t>* validation = nullptr;
  bool evaluate_er = true;  // which head the validation metrics describe
  std::function<void(const EpochLog&)> on_epoch;
};

// Raised when the loss or a parameter goes non-finite; the message carries
// the offending batch.
struct TrainingDivergence : NumericalError {
  using NumericalError::NumericalError;
};

TrainingLog train(Emert& model, const std::vector<data::MultimodalSample>& samples,
                  const std::vector<std::size_t>& train_indices, const TrainConfig& tcfg,
                  std::uint64_t seed, const TrainOptions& options = {});

struct SampleOutputs {
  std::vector<std::vector<double>> er;
  std::vector<std::vector<double>> fer;
};

// Raw head outputs (logits or regression values) without graph recording.
SampleOutputs predict(const Emert& model, const std::vector<data::MultimodalSample>& samples,
                      const std::vector<std::size_t>& indices, double noise_variance = 0.0,
                      std::uint64_t noise_seed = 0);

// Decoupled feature rows per modality for the given samples.
struct FeatureSet {
  Tensor fc;  // [3n, S], modality-major
  Tensor fp;
  std::vector<int> modality;  // row labels
};
FeatureSet extract_features(const Emert& model, const std::vector<data::MultimodalSample>& samples,
                            const std::vector<std::size_t>& indices);

// Trains a fresh 2-layer modality classifier on half of the rows and
// returns its accuracy on the other half.
double probe_accuracy(const Tensor& features, const std::vector<int>& labels, std::uint64_t seed,
                      std::size_t classes = kModalities);

}  // namespace emert::model
