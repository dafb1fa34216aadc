// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "emert/metrics.hpp"
#include "emert/model.hpp"
#include "emert/optim.hpp"

namespace emert::model {

using namespace emert::diff;

namespace {

constexpr std::size_t kEvalBatch = 64;

std::string describe_batch(const Batch& b, std::size_t epoch, std::size_t step) {
  std::ostringstream os;
  os << "training diverged at epoch " << epoch << ", step " << step << "; batch of " << b.size
     << " samples:";
  for (const auto& id : b.ids) os << ' ' << id;
  auto stats = [&](const char* name, const Tensor& t) {
    double lo = INFINITY, hi = -INFINITY, sum = 0.0;
    for (double v : t.data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
    os << "; " << name << " min " << lo << " max " << hi << " mean " << sum / static_cast<double>(t.size());
  };
  stats("face", b.face);
  stats("eyemove", b.eyemove);
  stats("fixation", b.fixation);
  return os.str();
}

std::vector<double> row_of(const Tensor& t, std::size_t r) {
  const std::size_t c = t.cols();
  return {t.ptr() + r * c, t.ptr() + (r + 1) * c};
}

}  // namespace

SampleOutputs predict(const Emert& model, const std::vector<data::MultimodalSample>& samples,
                      const std::vector<std::size_t>& indices, double noise_variance,
                      std::uint64_t noise_seed) {
  NoGradGuard no_grad;
  SampleOutputs out;
  for (std::size_t start = 0; start < indices.size(); start += kEvalBatch) {
    const std::size_t end = std::min(indices.size(), start + kEvalBatch);
    std::vector<std::size_t> chunk(indices.begin() + static_cast<long>(start),
                                   indices.begin() + static_cast<long>(end));
    // One noise stream per chunk keeps draws independent of chunking order.
    Batch batch = make_batch(samples, chunk, model.config(), noise_variance, noise_seed + start);
    ForwardResult r = model.forward(batch, false);
    for (std::size_t b = 0; b < batch.size; ++b) {
      if (r.prediction.er_out) out.er.push_back(row_of(r.prediction.er_out.value(), b));
      if (r.prediction.fer_out) out.fer.push_back(row_of(r.prediction.fer_out.value(), b));
    }
  }
  return out;
}

std::string TrainingLog::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,l_adv,l_e,l_f,l_total,disc_acc_FC,disc_acc_FP,learning_rate,val_war,val_uar,val_f1,"
        "val_mae,val_mse,val_rmse\n";
  auto opt = [&](const std::optional<double>& v) {
    os << ',';
    if (v) os << *v;
  };
  for (const auto& e : epochs) {
    os << e.epoch << ',' << e.l_adv << ',' << e.l_e << ',' << e.l_f << ',' << e.total << ','
       << e.disc_acc_fc << ',' << e.disc_acc_fp << ',' << e.learning_rate;
    opt(e.val_war);
    opt(e.val_uar);
    opt(e.val_f1);
    opt(e.val_mae);
    opt(e.val_mse);
    opt(e.val_rmse);
    os << '\n';
  }
  return os.str();
}

TrainingLog train(Emert& model, const std::vector<data::MultimodalSample>& samples,
                  const std::vector<std::size_t>& train_indices, const TrainConfig& tcfg,
                  std::uint64_t seed, const TrainOptions& options) {
  if (train_indices.empty()) throw ContractError("train on an empty dataset");
  if (tcfg.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (tcfg.epochs == 0) throw ConfigError("epochs must be positive");
  if (options.validation) {
    std::set<std::string> train_ids;
    for (std::size_t i : train_indices) train_ids.insert(samples.at(i).sample_id);
    for (std::size_t i : *options.validation)
      if (train_ids.count(samples.at(i).sample_id))
        throw ContractError("validation sample '" + samples[i].sample_id + "' is also in the training set");
  }

  const std::size_t n = train_indices.size();
  const std::size_t per_epoch = (n + tcfg.batch_size - 1) / tcfg.batch_size;
  SgdMomentum opt(model.parameters(), tcfg.learning_rate, tcfg.epochs * per_epoch, tcfg.momentum);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order = train_indices;
  TrainingLog log;
  const ModelConfig& cfg = model.config();

  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog e;
    e.epoch = epoch + 1;
    e.learning_rate = opt.rate();
    double seen = 0.0;
    for (std::size_t step = 0; step < per_epoch; ++step) {
      const std::size_t begin = step * tcfg.batch_size;
      const std::size_t end = std::min(n, begin + tcfg.batch_size);
      std::vector<std::size_t> idx(order.begin() + static_cast<long>(begin),
                                   order.begin() + static_cast<long>(end));
      const std::uint64_t noise_seed = seed ^ (0xa24baed4963ee407ULL * (epoch * per_epoch + step + 1));
      Batch batch = make_batch(samples, idx, cfg, tcfg.train_noise_variance, noise_seed);
      try {
        ForwardResult r = model.forward(batch, true);
        if (!std::isfinite(r.total.value().item())) throw NumericalError("non-finite loss");
        backward(r.total);
        opt.step();
        const double w = static_cast<double>(batch.size);
        seen += w;
        e.total += w * r.total.value().item();
        if (r.adversarial) {
          e.l_adv += w * r.adversarial->loss.value().item();
          e.disc_acc_fc += w * r.adversarial->acc_fc;
          e.disc_acc_fp += w * r.adversarial->acc_fp;
        }
        if (r.task.er) e.l_e += w * r.task.er.value().item();
        if (r.task.fer) e.l_f += w * r.task.fer.value().item();
      } catch (const NumericalError& err) {
        throw TrainingDivergence(describe_batch(batch, epoch + 1, step) + " (" + err.what() + ")");
      }
    }
    for (double* v : {&e.total, &e.l_adv, &e.l_e, &e.l_f, &e.disc_acc_fc, &e.disc_acc_fp}) *v /= seen;

    if (options.validation && !options.validation->empty()) {
      const bool er_view = options.evaluate_er;
      const TaskMode mode = er_view ? cfg.er_mode : cfg.fer_mode;
      const SampleOutputs out = predict(model, samples, *options.validation);
      const auto& rows = er_view ? out.er : out.fer;
      if (!rows.empty()) {
        if (is_classification(mode)) {
          metrics::ConfusionMatrix cm(task_outputs(mode));
          for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& r = rows[i];
            const int pred = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
            cm.add(class_target(samples[(*options.validation)[i]].labels, mode, er_view), pred);
          }
          const auto m = metrics::classification_metrics(cm);
          e.val_war = m.war;
          e.val_uar = m.uar;
          e.val_f1 = m.f1;
        } else {
          std::vector<double> pred, target;
          for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto t = regression_target(samples[(*options.validation)[i]].labels, mode, er_view);
            pred.insert(pred.end(), rows[i].begin(), rows[i].end());
            target.insert(target.end(), t.begin(), t.end());
          }
          const auto m = metrics::regression_metrics(pred, target);
          e.val_mae = m.mae;
          e.val_mse = m.mse;
          e.val_rmse = m.rmse;
        }
      }
    }
    if (options.on_epoch) options.on_epoch(e);
    log.epochs.push_back(e);
  }
  return log;
}

FeatureSet extract_features(const Emert& model, const std::vector<data::MultimodalSample>& samples,
                            const std::vector<std::size_t>& indices) {
  if (!model.config().use_mafd && !model.config().use_emt)
    throw ConfigError("model has no decoupled features");
  NoGradGuard no_grad;
  const std::size_t s = model.config().feature_width;
  const std::size_t n = indices.size();
  FeatureSet f;
  f.fc = Tensor::zeros(kModalities * n, s);
  f.fp = Tensor::zeros(kModalities * n, s);
  f.modality.resize(kModalities * n);
  for (std::size_t start = 0; start < n; start += kEvalBatch) {
    const std::size_t end = std::min(n, start + kEvalBatch);
    std::vector<std::size_t> chunk(indices.begin() + static_cast<long>(start),
                                   indices.begin() + static_cast<long>(end));
    Batch batch = make_batch(samples, chunk, model.config());
    DecoupledFeatures dec = model.decouple(model.encode(batch), batch.size);
    for (std::size_t m = 0; m < kModalities; ++m)
      for (std::size_t b = 0; b < batch.size; ++b) {
        const std::size_t row = m * n + start + b;
        std::copy_n(dec.fc[m].value().ptr() + b * s, s, f.fc.ptr() + row * s);
        std::copy_n(dec.fp[m].value().ptr() + b * s, s, f.fp.ptr() + row * s);
        f.modality[row] = static_cast<int>(m);
      }
  }
  return f;
}

double probe_accuracy(const Tensor& features, const std::vector<int>& labels, std::uint64_t seed,
                      std::size_t classes) {
  const std::size_t n = features.rows(), d = features.cols();
  if (labels.size() != n || n < 4) throw ParameterError("probe needs >= 4 labelled rows");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = n / 2;

  // Standardize with training statistics; constant columns become zero.
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (std::size_t i = 0; i < n_train; ++i)
    for (std::size_t c = 0; c < d; ++c) mu[c] += features.at(order[i], c);
  for (double& v : mu) v /= static_cast<double>(n_train);
  for (std::size_t i = 0; i < n_train; ++i)
    for (std::size_t c = 0; c < d; ++c) sd[c] += std::pow(features.at(order[i], c) - mu[c], 2);
  for (double& v : sd) v = std::sqrt(v / static_cast<double>(n_train));
  auto standardized = [&](std::size_t begin, std::size_t end) {
    Tensor t = Tensor::zeros(end - begin, d);
    for (std::size_t i = begin; i < end; ++i)
      for (std::size_t c = 0; c < d; ++c)
        t.at(i - begin, c) = sd[c] > 1e-12 ? (features.at(order[i], c) - mu[c]) / sd[c] : 0.0;
    return t;
  };
  const Tensor train_x = standardized(0, n_train);
  const Tensor test_x = standardized(n_train, n);

  const std::size_t hidden = 32;
  std::normal_distribution<double> init1(0.0, std::sqrt(2.0 / static_cast<double>(d + hidden)));
  std::normal_distribution<double> init2(0.0, std::sqrt(2.0 / static_cast<double>(hidden + classes)));
  Tensor w1 = Tensor::zeros(d, hidden), w2 = Tensor::zeros(hidden, classes);
  for (double& v : w1.data()) v = init1(rng);
  for (double& v : w2.data()) v = init2(rng);
  Linear l1{parameter(std::move(w1)), parameter(Tensor::zeros(1, hidden))};
  Linear l2{parameter(std::move(w2)), parameter(Tensor::zeros(1, classes))};
  Mlp2 probe{l1, l2};

  const std::size_t epochs = 150, batch = 32;
  const std::size_t per_epoch = (n_train + batch - 1) / batch;
  SgdMomentum opt({l1.w, l1.b, l2.w, l2.b}, 0.05, epochs * per_epoch);
  std::vector<std::size_t> idx(n_train);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t e = 0; e < epochs; ++e) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t start = 0; start < n_train; start += batch) {
      const std::size_t end = std::min(n_train, start + batch);
      Tensor xb = Tensor::zeros(end - start, d);
      std::vector<int> yb;
      for (std::size_t i = start; i < end; ++i) {
        std::copy_n(train_x.ptr() + idx[i] * d, d, xb.ptr() + (i - start) * d);
        yb.push_back(labels[order[idx[i]]]);
      }
      backward(cross_entropy(probe(constant(std::move(xb))), yb));
      opt.step();
    }
  }
  NoGradGuard no_grad;
  const Tensor logits = probe(constant(test_x)).value();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const double* r = logits.ptr() + i * classes;
    if (std::max_element(r, r + classes) - r == labels[order[n_train + i]]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

}  // namespace emert::model
