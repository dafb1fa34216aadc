// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "emert/ala.hpp"
#include "emert/error.hpp"
#include "oracles.hpp"

using namespace emert;
using namespace emert::ala;
using namespace emert::testing;

TEST_CASE("consistency filter") {
  std::vector<AnnotationBundle> items;
  std::map<std::string, int> er;
  for (int j = 0; j < 10; ++j) {
    const std::string id = "v" + std::to_string(j);
    er[id] = j % 3;
    const int machine = j < 4 ? (j % 3 + 1) % 3 : j % 3;
    items.push_back(bundle(id, 3, {}, machine));
  }
  const auto r = consistency_filter(items, er);
  CHECK(r.accepted.size() == 6);
  CHECK(r.contested.size() == 4);
  CHECK(r.accepted.at("v7") == 1);

  items[5].machine_label.reset();
  CHECK(consistency_filter(items, er).contested.size() == 5);

  std::map<std::string, int> missing = er;
  missing.erase("v0");
  CHECK_THROWS_AS(consistency_filter(items, missing), ParameterError);
}

TEST_CASE("bundle validation") {
  CHECK_THROWS_AS(bundle("x", 3, {0, 3}).validate(), ParameterError);
  CHECK_THROWS_AS(bundle("x", 3, {}).validate(), ParameterError);
  CHECK_NOTHROW(bundle("x", 3, {}, 2).validate());
  auto dup = bundle("x", 3, {0, 1});
  dup.expert_labels[1].annotator = "e0";
  CHECK_THROWS_AS(dup.validate(), ParameterError);
}

TEST_CASE("two agreeing annotators become highly reliable") {
  std::vector<AnnotationBundle> items;
  for (int j = 0; j < 12; ++j) items.push_back(bundle("i" + std::to_string(j), 3, {j % 3, j % 3}));
  const auto m = em_reliability(items);
  CHECK(m.converged);
  CHECK(m.alpha.at("e0") > 0.99);
  CHECK(m.alpha.at("e0") == doctest::Approx(m.alpha.at("e1")));
  for (std::size_t j = 0; j < items.size(); ++j) CHECK(m.posteriors[j][j % 3] >= 0.99);
}

TEST_CASE("a contrarian annotator ends below one half") {
  std::vector<AnnotationBundle> items;
  for (int j = 0; j < 5; ++j) items.push_back(bundle("i" + std::to_string(j), 2, {j % 2, j % 2, 1 - j % 2}));
  const auto m = em_reliability(items);
  CHECK(m.alpha.at("e2") < 0.5);
  CHECK(m.alpha.at("e0") > 0.5);
  OracleStats stats;
  run_oracle(items, 2, stats);
  CHECK(stats.posterior_err < 1e-6);
  CHECK(stats.residual < 1e-6);
}

TEST_CASE("first E-step by hand") {
  // alpha 0.7 for all, uniform prior, K = 3, labels {0, 0, 1}.
  const auto b = bundle("x", 3, {0, 0, 1});
  const std::map<std::string, double> alpha = {{"e0", 0.7}, {"e1", 0.7}, {"e2", 0.7}};
  const auto post = item_posterior(b, alpha, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  const double p0 = 0.7 * 0.7 * 0.15, p1 = 0.15 * 0.15 * 0.7, p2 = 0.15 * 0.15 * 0.15;
  const double z = p0 + p1 + p2;
  CHECK(post[0] == doctest::Approx(p0 / z).epsilon(1e-12));
  CHECK(post[1] == doctest::Approx(p1 / z).epsilon(1e-12));
  CHECK(post[2] == doctest::Approx(p2 / z).epsilon(1e-12));
  // Symmetric annotations give a symmetric posterior.
  const auto tie = item_posterior(bundle("y", 3, {0, 1, 2}), alpha, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  CHECK(tie[0] == doctest::Approx(1.0 / 3));
  CHECK(tie[1] == doctest::Approx(1.0 / 3));
}

TEST_CASE("EM fixed points match exhaustive enumeration, K = 2, every instance") {
  OracleStats stats;
  for (std::size_t items = 2; items <= 5; ++items) {
    std::size_t total = 1;
    for (std::size_t j = 0; j < items; ++j) total *= 8;
    for (std::size_t code = 0; code < total; ++code) run_oracle(decode(code, items, 2), 2, stats);
  }
  MESSAGE("instances " << stats.instances << ", max posterior error " << stats.posterior_err
                       << ", max fixed-point residual " << stats.residual);
  CHECK(stats.posterior_err < 1e-6);
  CHECK(stats.residual < 1e-6);
  CHECK(stats.ll_drop <= 1e-9);
}

TEST_CASE("EM fixed points match exhaustive enumeration, K = 3") {
  OracleStats stats;
  // Every 2- and 3-item instance, then random 4- and 5-item instances.
  for (std::size_t items = 2; items <= 3; ++items) {
    std::size_t total = 1;
    for (std::size_t j = 0; j < items; ++j) total *= 27;
    for (std::size_t code = 0; code < total; ++code) run_oracle(decode(code, items, 3), 3, stats);
  }
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 3000; ++trial) {
    const std::size_t items = 4 + static_cast<std::size_t>(trial % 2);
    std::size_t total = 1;
    for (std::size_t j = 0; j < items; ++j) total *= 27;
    run_oracle(decode(std::uniform_int_distribution<std::size_t>(0, total - 1)(rng), items, 3), 3, stats);
  }
  MESSAGE("instances " << stats.instances << ", max posterior error " << stats.posterior_err
                       << ", max fixed-point residual " << stats.residual);
  CHECK(stats.posterior_err < 1e-6);
  CHECK(stats.residual < 1e-6);
  CHECK(stats.ll_drop <= 1e-9);
}

TEST_CASE("log-likelihood never decreases on larger random instances") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + trial % 5;
    std::uniform_int_distribution<int> cls(0, k - 1);
    std::bernoulli_distribution right(0.7);
    std::vector<AnnotationBundle> items;
    for (int j = 0; j < 40; ++j) {
      const int truth = cls(rng);
      std::vector<int> labels(5);
      for (int& l : labels) l = right(rng) ? truth : cls(rng);
      items.push_back(bundle("i" + std::to_string(j), k, labels, right(rng) ? truth : cls(rng)));
    }
    const auto m = em_reliability(items);
    for (std::size_t i = 1; i < m.log_likelihood_trace.size(); ++i)
      CHECK(m.log_likelihood_trace[i] >= m.log_likelihood_trace[i - 1] - 1e-9);
    CHECK(m.alpha.count(std::string(kMachineAnnotator)) == 1);
    CHECK(m.log_likelihood == doctest::Approx(log_likelihood(items, m.alpha, m.class_prior)));
  }
}

TEST_CASE("annotator order does not change any output") {
  std::mt19937_64 rng(15);
  std::uniform_int_distribution<int> cls(0, 2);
  std::vector<AnnotationBundle> items;
  for (int j = 0; j < 20; ++j) items.push_back(bundle("i" + std::to_string(j), 3, {cls(rng), cls(rng), cls(rng), cls(rng)}, cls(rng)));
  const auto base = em_reliability(items);
  auto shuffled = items;
  for (auto& b : shuffled) std::shuffle(b.expert_labels.begin(), b.expert_labels.end(), rng);
  const auto m = em_reliability(shuffled);
  CHECK(m.alpha == base.alpha);
  CHECK(m.posteriors == base.posteriors);
  CHECK(m.log_likelihood == base.log_likelihood);
  for (std::size_t j = 0; j < items.size(); ++j) CHECK(weighted_vote(shuffled[j], m) == weighted_vote(items[j], base));
}

TEST_CASE("single annotator falls back to one half") {
  std::vector<AnnotationBundle> items = {bundle("a", 2, {0}), bundle("b", 2, {1})};
  const auto m = em_reliability(items);
  CHECK(m.degenerate);
  CHECK(m.alpha.at("e0") == 0.5);
}

TEST_CASE("weighted vote examples") {
  CHECK(weighted_vote(bundle("x", 3, {2, 2, 2}), {{"e0", 0.1}, {"e1", 0.2}, {"e2", 0.9}}) == 2);
  // weights 0.9/1.1 = 0.818 for class 0 against 0.2/1.1 = 0.182 for class 1
  CHECK(weighted_vote(bundle("x", 2, {0, 1, 1}), {{"e0", 0.9}, {"e1", 0.1}, {"e2", 0.1}}) == 0);
  const std::map<std::string, double> equal = {{"e0", 0.5}, {"e1", 0.5}, {"e2", 0.5}, {"e3", 0.5}};
  CHECK(weighted_vote(bundle("x", 4, {3, 1, 3, 1}), equal) == 1);
  CHECK(majority_vote(bundle("x", 4, {3, 1, 3, 1})) == 1);
  AnnotationBundle empty;
  empty.class_count = 3;
  CHECK_THROWS_AS(weighted_vote(empty, equal), ParameterError);
  CHECK_THROWS_AS(weighted_vote(bundle("x", 3, {0, 1}), {{"e0", 0.5}}), ParameterError);
}

TEST_CASE("uniform alpha weighted vote equals majority vote") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 2000; ++trial) {
    const int k = 2 + trial % 4;
    std::uniform_int_distribution<int> cls(0, k - 1);
    std::vector<int> labels(1 + trial % 6);
    for (int& l : labels) l = cls(rng);
    const auto b = bundle("x", k, labels, trial % 3 == 0 ? std::optional<int>(cls(rng)) : std::nullopt);
    std::map<std::string, double> alpha;
    for (const auto& l : b.all_labels()) alpha[l.annotator] = 0.37;
    CHECK(weighted_vote(b, alpha) == majority_vote(b));
  }
}

TEST_CASE("Cronbach's alpha") {
  using emert::diff::Tensor;
  Tensor same({6, 2}, {1, 1, 2, 2, 3, 3, 5, 5, 4, 4, 2, 2});
  CHECK(cronbach_alpha(same) == 1.0);

  std::mt19937_64 rng(1234);
  std::normal_distribution<double> d(0.0, 1.0);
  Tensor random({10000, 2});
  for (double& v : random.storage()) v = d(rng);
  CHECK(std::abs(cronbach_alpha(random)) < 0.05);

  const Tensor fixture({5, 3}, {3, 4, 3, 5, 5, 4, 2, 3, 3, 4, 4, 5, 1, 2, 2});
  // Covariance form: k/(k-1) * sum of off-diagonal covariances / total variance.
  const std::size_t n = 5, k = 3;
  std::vector<double> mean(k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < k; ++r) mean[r] += fixture.at(i, r) / n;
  double off = 0.0, total = 0.0;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      double cov = 0.0;
      for (std::size_t i = 0; i < n; ++i) cov += (fixture.at(i, a) - mean[a]) * (fixture.at(i, b) - mean[b]);
      cov /= n - 1;
      total += cov;
      if (a != b) off += cov;
    }
  const double closed = 1.5 * off / total;
  CHECK(std::abs(closed - 0.9333333333333333) < 1e-12);
  CHECK(std::abs(cronbach_alpha(fixture) - closed) < 1e-9);

  CHECK_THROWS_AS(cronbach_alpha(Tensor({3, 2}, {1, 1, 1, 1, 1, 1})), ParameterError);
  CHECK_THROWS_AS(cronbach_alpha(Tensor({1, 2}, {1, 2})), ParameterError);
}

TEST_CASE("annotation job end to end") {
  std::vector<AnnotatedItem> items;
  for (int j = 0; j < 8; ++j) {
    AnnotatedItem it;
    it.bundle = bundle("v" + std::to_string(j), 3, {j % 3, j % 3, (j + 1) % 3}, j < 5 ? j % 3 : (j + 2) % 3);
    it.er_label = j % 3;
    it.valence = {{"e0", 0.1 * j}, {"e1", 0.1 * j + 0.05}, {"e2", 0.1 * j - 0.02}};
    it.arousal = {{"e0", -0.1 * j}, {"e1", -0.1 * j}, {"e2", -0.1 * j + 0.1}};
    items.push_back(it);
  }
  const auto report = annotate(items);
  CHECK(report.fused.size() == 8);
  CHECK(report.contested.size() == 3);
  for (int j = 0; j < 8; ++j) CHECK(report.fused.at("v" + std::to_string(j)) == j % 3);
  REQUIRE(report.cronbach_valence.has_value());
  CHECK(*report.cronbach_valence > 0.9);
  CHECK(report_json(report).find("\"fused_labels\"") != std::string::npos);
}
