// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "emert/kernels.hpp"

using namespace emert::kernels;

namespace {

std::vector<double> randv(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// Tolerance scaled by the magnitude of the summed terms, since the two
// variants round in a different order.
void check_close(const std::vector<double>& a, const std::vector<double>& b, double scale) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-13 * scale + 1e-15);
}

std::vector<const KernelTable*> simd_tables() {
  std::vector<const KernelTable*> out;
  if (auto* t = avx2_table()) out.push_back(t);
  if (auto* t = neon_table()) out.push_back(t);
  return out;
}

}  // namespace

TEST_CASE("SIMD variants agree with the scalar reference across odd sizes") {
  std::mt19937_64 rng(11);
  const auto& ref = scalar_table();
  const auto tables = simd_tables();
  if (tables.empty()) MESSAGE("no SIMD variant available on this host; only the reference is exercised");
  for (const KernelTable* t : tables) {
    for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 9u, 17u, 64u, 131u}) {
      auto x = randv(n, rng), y = randv(n, rng);
      double mag = 0.0;
      for (std::size_t i = 0; i < n; ++i) mag += std::abs(x[i] * y[i]);
      CHECK(std::abs(t->dot(n, x.data(), y.data()) - ref.dot(n, x.data(), y.data())) <= 1e-13 * mag + 1e-15);

      auto y1 = y, y2 = y;
      t->axpy(n, 0.37, x.data(), y1.data());
      ref.axpy(n, 0.37, x.data(), y2.data());
      check_close(y1, y2, 4.0);

      y1 = y;
      y2 = y;
      t->mul_inplace(n, x.data(), y1.data());
      ref.mul_inplace(n, x.data(), y2.data());
      CHECK(y1 == y2);
    }
    for (auto [m, n, k] : std::vector<std::array<std::size_t, 3>>{{1, 1, 1}, {3, 5, 7}, {4, 4, 4}, {9, 13, 6}, {16, 33, 17}}) {
      const auto a = randv(m * k, rng), b = randv(k * n, rng), bt = randv(n * k, rng), at = randv(k * m, rng);
      const auto c0 = randv(m * n, rng);
      const double scale = 4.0 * static_cast<double>(k);
      auto c1 = c0, c2 = c0;
      t->gemm_nn(m, n, k, a.data(), b.data(), c1.data());
      ref.gemm_nn(m, n, k, a.data(), b.data(), c2.data());
      check_close(c1, c2, scale);
      c1 = c2 = c0;
      t->gemm_nt(m, n, k, a.data(), bt.data(), c1.data());
      ref.gemm_nt(m, n, k, a.data(), bt.data(), c2.data());
      check_close(c1, c2, scale);
      c1 = c2 = c0;
      t->gemm_tn(m, n, k, at.data(), b.data(), c1.data());
      ref.gemm_tn(m, n, k, at.data(), b.data(), c2.data());
      check_close(c1, c2, scale);
    }
  }
}

TEST_CASE("a row's GEMM result does not depend on its position in the batch") {
  std::mt19937_64 rng(5);
  std::vector<const KernelTable*> tables = simd_tables();
  tables.push_back(&scalar_table());
  for (const KernelTable* t : tables) {
    const std::size_t m = 7, n = 11, k = 9;
    const auto a = randv(m * k, rng), b = randv(k * n, rng), bt = randv(n * k, rng);
    std::vector<double> full(m * n, 0.0), full_nt(m * n, 0.0);
    t->gemm_nn(m, n, k, a.data(), b.data(), full.data());
    t->gemm_nt(m, n, k, a.data(), bt.data(), full_nt.data());
    for (std::size_t r = 0; r < m; ++r) {
      std::vector<double> one(n, 0.0), one_nt(n, 0.0);
      t->gemm_nn(1, n, k, a.data() + r * k, b.data(), one.data());
      t->gemm_nt(1, n, k, a.data() + r * k, bt.data(), one_nt.data());
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(one[j] == full[r * n + j]);
        CHECK(one_nt[j] == full_nt[r * n + j]);
      }
    }
  }
}

TEST_CASE("GEMM accumulates into C and matches a hand product") {
  const double a[] = {1, 2, 3, 4};  // [[1,2],[3,4]]
  const double b[] = {5, 6, 7, 8};  // [[5,6],[7,8]]
  for (const KernelTable* t : {&scalar_table(), avx2_table(), neon_table()}) {
    if (!t) continue;
    double c[] = {1, 1, 1, 1};
    t->gemm_nn(2, 2, 2, a, b, c);
    CHECK(c[0] == 20);
    CHECK(c[1] == 23);
    CHECK(c[2] == 44);
    CHECK(c[3] == 51);
  }
}

TEST_CASE("force() switches the active table and reports its name") {
  const Isa before = active().isa;
  force(Isa::kScalar);
  CHECK(active().isa == Isa::kScalar);
  CHECK(isa_name(Isa::kScalar) == "scalar");
  force(before);
  CHECK(active().isa == before);
}
