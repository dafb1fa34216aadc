// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "emert/model.hpp"
#include "oracles.hpp"

using namespace emert;
using namespace emert::model;
using emert::testing::assembled_gradient_error;
using emert::testing::gradient_check;
using emert::testing::zero_grads;

namespace {

data::SequenceDims tiny_dims() { return data::SequenceDims{2, 3, 3, 2, 3, 3}; }

ModelConfig tiny_config() {
  ModelConfig c;
  c.feature_width = 4;
  c.ffn_width = 4;
  c.layers = 1;
  c.heads = 2;
  c.disc_hidden = 4;
  c.head_hidden = 4;
  c.dims = tiny_dims();
  return c;
}

std::vector<data::MultimodalSample> samples(std::size_t n, const data::SequenceDims& dims, std::uint64_t seed = 3) {
  data::GapSpec spec;
  spec.seed = seed;
  return data::generate_synthetic(n, spec, dims);
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

bool all_zero(const Tensor& t) {
  for (double v : t.data())
    if (v != 0.0) return false;
  return true;
}

std::vector<Var> params_with_prefix(const Emert& m, const std::string& prefix) {
  std::vector<Var> out;
  for (const auto& [name, v] : m.named_parameters())
    if (name.rfind(prefix, 0) == 0) out.push_back(v);
  return out;
}

}  // namespace

TEST_CASE("encoder output shapes under defaults") {
  const ModelConfig cfg;
  Emert m(cfg, 1);
  const auto s = samples(1, cfg.dims);
  const auto batch = make_batch(s, {0}, cfg);
  diff::NoGradGuard guard;
  const auto e = m.encode(batch);
  CHECK(e.h[0].shape() == diff::Shape{8, 64});
  CHECK(e.h[1].shape() == diff::Shape{32, 64});
  CHECK(e.h[2].shape() == diff::Shape{32, 64});
}

TEST_CASE("zero input through a zero-initialised encoder gives zero output") {
  const ModelConfig cfg = tiny_config();
  Emert m(cfg, 2);
  for (const auto& p : m.parameters()) p.node()->value.fill(0.0);
  auto s = samples(2, cfg.dims);
  for (auto& x : s) {
    x.face_seq.fill(0.0);
    x.eyemove_seq.fill(0.0);
    x.fixation_seq.fill(0.0);
  }
  diff::NoGradGuard guard;
  const auto e = m.encode(make_batch(s, {0, 1}, cfg));
  for (const auto& h : e.h) CHECK(all_zero(h.value()));
}

TEST_CASE("permuting the batch permutes the encoder outputs") {
  const ModelConfig cfg = tiny_config();
  Emert m(cfg, 4);
  const auto s = samples(3, cfg.dims);
  diff::NoGradGuard guard;
  const auto a = m.encode(make_batch(s, {0, 1, 2}, cfg));
  const auto b = m.encode(make_batch(s, {2, 0, 1}, cfg));
  const std::size_t perm[] = {2, 0, 1};
  const std::size_t lens[] = {cfg.dims.face_len, cfg.dims.eyemove_len, cfg.dims.fixation_len};
  for (std::size_t mod = 0; mod < kModalities; ++mod) {
    const Tensor& ta = a.h[mod].value();
    const Tensor& tb = b.h[mod].value();
    const std::size_t t = lens[mod];
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t r = 0; r < t; ++r)
        for (std::size_t c = 0; c < ta.cols(); ++c) CHECK(tb.at(i * t + r, c) == ta.at(perm[i] * t + r, c));
  }
}

TEST_CASE("shared generic extractor, modality-specific unique extractors") {
  const ModelConfig cfg = tiny_config();
  Emert m(cfg, 5);
  // Dyadic values so mean pooling over different lengths is exact.
  const Tensor row({1, 4}, {0.5, -1.25, 2.0, 0.75});
  Encoded e;
  const std::size_t lens[] = {cfg.dims.face_len, cfg.dims.eyemove_len, cfg.dims.fixation_len};
  for (std::size_t mod = 0; mod < kModalities; ++mod) {
    Tensor h = Tensor::zeros(lens[mod], cfg.feature_width);
    for (std::size_t r = 0; r < lens[mod]; ++r)
      for (std::size_t c = 0; c < cfg.feature_width; ++c) h.at(r, c) = row[c];
    e.h[mod] = diff::constant(h);
  }
  diff::NoGradGuard guard;
  const auto d = m.decouple(e, 1);
  CHECK(d.fc[0].value() == d.fc[1].value());
  CHECK(d.fc[1].value() == d.fc[2].value());
  CHECK(d.fp[0].value() != d.fp[1].value());
  CHECK(d.fp[1].value() != d.fp[2].value());
}

TEST_CASE("gradient reversal flips the adversarial gradient into the generic extractor") {
  const ModelConfig cfg = tiny_config();
  Emert m(cfg, 6);
  const auto s = samples(2, cfg.dims);
  const auto batch = make_batch(s, {0, 1}, cfg);
  const auto targets = params_with_prefix(m, "mlp_c");
  REQUIRE_FALSE(targets.empty());
  auto adv = [&] { return m.adversarial_loss(m.decouple(m.encode(batch), 2), batch).loss; };
  zero_grads(m);
  diff::backward(adv());
  // Central differences see the loss without the reversal.
  double agree = 0.0, total = 0.0;
  for (const auto& p : targets) {
    Tensor& v = p.node()->value;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      double plus = 0.0, minus = 0.0;
      {
        diff::NoGradGuard guard;
        v[i] = saved + 1e-5;
        plus = adv().value().item();
        v[i] = saved - 1e-5;
        minus = adv().value().item();
      }
      v[i] = saved;
      const double numeric = (plus - minus) / 2e-5;
      const double analytic = p.grad()[i];
      if (std::abs(numeric) < 1e-7) continue;
      total += 1.0;
      CHECK(analytic == doctest::Approx(-cfg.grl_lambda * numeric).epsilon(1e-4));
      agree += (analytic * numeric < 0) ? 1.0 : 0.0;
    }
  }
  CHECK(total > 0.0);
  CHECK(agree == total);
}

TEST_CASE("uniform discriminator gives ln 3 per vector") {
  const ModelConfig cfg = tiny_config();
  Emert m(cfg, 7);
  for (const auto& p : params_with_prefix(m, "disc.l2")) p.node()->value.fill(0.0);
  const auto s = samples(3, cfg.dims);
  const auto batch = make_batch(s, {0, 1, 2}, cfg);
  diff::NoGradGuard guard;
  const auto r = m.adversarial_loss(m.decouple(m.encode(batch), 3), batch);
  CHECK(r.loss.value().item() == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("total loss weights") {
  ModelConfig cfg = tiny_config();
  Emert m(cfg, 8);
  const auto c = [](double v) { return diff::constant(Tensor::scalar(v)); };
  CHECK(m.total_loss(c(1), {c(2), c(3)}).value().item() == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(m.total_loss(c(0), {c(0), c(0)}).value().item() == 0.0);
  cfg.beta_task = 0.0;
  Emert b0(cfg, 8);
  CHECK(b0.total_loss(c(1), {c(2), c(3)}).value().item() == doctest::Approx(0.3));
  CHECK(b0.total_loss(c(1), {c(20), c(30)}).value().item() == doctest::Approx(0.3));
  CHECK_THROWS_AS(m.total_loss(Var(), {}), ContractError);
}

TEST_CASE("full model gradient check") {
  struct Variant {
    bool mafd, emt;
    TaskMode er, fer;
    double lambda;
  };
  for (const Variant& v : {Variant{true, true, TaskMode::kClassify3, TaskMode::kClassify3, 1.0},
                           Variant{true, true, TaskMode::kRegressVa, TaskMode::kRegressIntensity, 0.5},
                           Variant{true, false, TaskMode::kClassify7, TaskMode::kClassify7, 1.0},
                           Variant{false, true, TaskMode::kClassify3, TaskMode::kRegressVa, 1.0},
                           Variant{false, false, TaskMode::kClassify3, TaskMode::kClassify3, 1.0}}) {
    ModelConfig cfg = tiny_config();
    cfg.use_mafd = v.mafd;
    cfg.use_emt = v.emt;
    cfg.er_mode = v.er;
    cfg.fer_mode = v.fer;
    cfg.grl_lambda = v.lambda;
    cfg.layers = 2;
    Emert m(cfg, 10);
    const auto s = samples(2, cfg.dims, 11);
    const auto batch = make_batch(s, {0, 1}, cfg);
    const double err = assembled_gradient_error(m, batch);
    MESSAGE("mafd=" << v.mafd << " emt=" << v.emt << " lambda=" << v.lambda << " max relative error " << err);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("fuse block gradient check") {
  const ModelConfig cfg = tiny_config();
  Emert m(cfg, 12);
  std::mt19937_64 rng(13);
  DecoupledFeatures d;
  std::vector<Var> inputs;
  for (std::size_t mod = 0; mod < kModalities; ++mod) {
    d.fc[mod] = diff::parameter(emert::testing::random_tensor(2, cfg.feature_width, rng));
    d.fp[mod] = diff::parameter(emert::testing::random_tensor(2, cfg.feature_width, rng));
    inputs.push_back(d.fc[mod]);
    inputs.push_back(d.fp[mod]);
  }
  auto params = params_with_prefix(m, "fusion.");
  REQUIRE_FALSE(params.empty());
  params.insert(params.end(), inputs.begin(), inputs.end());
  const Tensor proj = emert::testing::random_tensor(cfg.feature_width, 1, rng);
  auto loss = [&] { return diff::sum(diff::matmul(m.fuse(d, 2), diff::constant(proj))); };
  CHECK(gradient_check(loss, params) < 1e-4);
}

TEST_CASE("attention weights sum to one and a single key passes its value through") {
  const ModelConfig cfg = tiny_config();
  Emert m(cfg, 14);
  const auto s = samples(4, cfg.dims);
  const auto batch = make_batch(s, iota(4), cfg);
  diff::NoGradGuard guard;
  Tensor w;
  const auto d = m.decouple(m.encode(batch), 4);
  m.fuse(d, 4, &w);
  REQUIRE(w.rows() == 4 * cfg.heads * kModalities);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < w.cols(); ++c) sum += w.at(r, c);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }

  std::mt19937_64 rng(15);
  const Var q = diff::constant(emert::testing::random_tensor(6, 4, rng));
  const Var k = diff::constant(emert::testing::random_tensor(2, 4, rng));
  const Var v = diff::constant(emert::testing::random_tensor(2, 4, rng));
  const Var out = diff::attention(q, k, v, 2, 3, 1, 2);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t c = 0; c < 4; ++c) CHECK(out.value().at(b * 3 + t, c) == doctest::Approx(v.value().at(b, c)).epsilon(1e-12));
}

TEST_CASE("disabled heads and masked modalities receive exactly zero gradient") {
  ModelConfig cfg = tiny_config();
  cfg.fer_head = false;
  cfg.modalities = {true, true, false};
  Emert m(cfg, 16);
  const auto s = samples(3, cfg.dims);
  const auto batch = make_batch(s, {0, 1, 2}, cfg);
  zero_grads(m);
  const auto r = m.forward(batch);
  CHECK_FALSE(r.task.fer);
  CHECK(r.task.er);
  diff::backward(r.total);
  for (const auto& [name, p] : m.named_parameters()) {
    if (name.rfind("head.fer", 0) == 0 || name.rfind("fix.", 0) == 0) {
      CHECK_MESSAGE(all_zero(p.grad()), name);
    }
  }
  bool er_moved = false;
  for (const auto& p : params_with_prefix(m, "head.er")) er_moved |= !all_zero(p.grad());
  CHECK(er_moved);

  // beta applies to L_e alone.
  Var adv = r.adversarial ? r.adversarial->loss : Var();
  const double expect = cfg.alpha_adv * adv.value().item() + cfg.beta_task * r.task.er.value().item();
  CHECK(r.total.value().item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("learning rate zero leaves every parameter unchanged") {
  const ModelConfig cfg = tiny_config();
  Emert m(cfg, 17);
  std::vector<Tensor> before;
  for (const auto& p : m.parameters()) before.push_back(p.value());
  const auto s = samples(20, cfg.dims);
  TrainConfig t;
  t.epochs = 3;
  t.batch_size = 4;
  t.learning_rate = 0.0;
  train(m, s, iota(20), t, 1);
  const auto after = m.parameters();
  for (std::size_t i = 0; i < after.size(); ++i) CHECK(after[i].value() == before[i]);
}

TEST_CASE("training is deterministic under a fixed seed") {
  const ModelConfig cfg = tiny_config();
  const auto s = samples(24, cfg.dims);
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 5;
  const auto valid = std::vector<std::size_t>{20, 21, 22, 23};
  TrainOptions opt;
  opt.validation = &valid;
  std::vector<std::size_t> tr(20);
  std::iota(tr.begin(), tr.end(), 0);
  Emert a(cfg, 18), b(cfg, 18);
  const auto la = train(a, s, tr, t, 5, opt);
  const auto lb = train(b, s, tr, t, 5, opt);
  CHECK(la.to_csv() == lb.to_csv());
  for (std::size_t i = 0; i < a.parameters().size(); ++i) CHECK(a.parameters()[i].value() == b.parameters()[i].value());

  const auto csv = la.to_csv();
  CHECK(csv.rfind("epoch,l_adv,l_e,l_f,l_total,disc_acc_FC,disc_acc_FP,learning_rate,val_war", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  REQUIRE(la.epochs.size() == 2);
  CHECK(la.epochs[0].val_war.has_value());
  CHECK(la.epochs[1].learning_rate < la.epochs[0].learning_rate);

  const std::vector<std::size_t> overlap = {0, 21};
  opt.validation = &overlap;
  Emert c(cfg, 18);
  CHECK_THROWS_AS(train(c, s, tr, t, 5, opt), ContractError);
}

TEST_CASE("checkpoint round trip") {
  ModelConfig cfg = tiny_config();
  cfg.er_mode = TaskMode::kClassify7;
  Emert m(cfg, 19);
  const auto path = std::filesystem::temp_directory_path() / "emert_test_model.ckpt";
  m.save(path);
  const Emert back = Emert::load(path);
  CHECK(back.seed() == 19);
  CHECK(to_json(back.config()) == to_json(cfg));
  REQUIRE(back.named_parameters().size() == m.named_parameters().size());
  for (std::size_t i = 0; i < m.named_parameters().size(); ++i) {
    CHECK(back.named_parameters()[i].first == m.named_parameters()[i].first);
    CHECK(back.named_parameters()[i].second.value() == m.named_parameters()[i].second.value());
  }
  const auto s = samples(5, cfg.dims);
  CHECK(predict(back, s, iota(5)).er == predict(m, s, iota(5)).er);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(Emert::load(path), DataError);
}

TEST_CASE("divergence reports the offending batch") {
  const ModelConfig cfg = tiny_config();
  Emert m(cfg, 20);
  auto s = samples(8, cfg.dims);
  s[3].face_seq[0] = 1e300;
  TrainConfig t;
  t.epochs = 1;
  t.batch_size = 8;
  try {
    train(m, s, iota(8), t, 1);
    FAIL("expected divergence");
  } catch (const TrainingDivergence& e) {
    const std::string msg = e.what();
    CHECK(msg.find(s[3].sample_id) != std::string::npos);
    CHECK(msg.find("max") != std::string::npos);
  }
}

TEST_CASE("config validation") {
  ModelConfig cfg = tiny_config();
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(model_config_from_json(nlohmann::json{{"no_such_key", 1}}), ConfigError);
  const auto j = to_json(tiny_config());
  CHECK(to_json(model_config_from_json(j)) == j);
}

TEST_CASE("feature probe separates unique features by modality") {
  ModelConfig cfg = tiny_config();
  Emert m(cfg, 21);
  const auto s = samples(60, cfg.dims);
  const auto f = extract_features(m, s, iota(60));
  CHECK(f.fc.rows() == 180);
  CHECK(f.modality.size() == 180);
  const double acc = probe_accuracy(f.fp, f.modality, 3);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  cfg.use_mafd = cfg.use_emt = false;
  Emert plain(cfg, 21);
  CHECK_THROWS_AS(extract_features(plain, s, iota(4)), ConfigError);
}
