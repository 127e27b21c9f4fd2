// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <vector>

#include "doctest.h"
#include "sgia/kernels.hpp"
#include "sgia/rng.hpp"

using namespace sgia;
using kernels::KernelTable;

namespace {

std::vector<const KernelTable*> vector_tables() {
  std::vector<const KernelTable*> out;
  if (auto* t = kernels::avx2_table()) out.push_back(t);
  if (auto* t = kernels::neon_table()) out.push_back(t);
  return out;
}

std::vector<float> randoms(std::size_t n, std::uint64_t seed, double lo = -2.0, double hi = 2.0) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

// Lengths covering empty input, sub-vector tails and several full lanes.
const std::size_t kLengths[] = {0, 1, 3, 7, 8, 9, 15, 16, 17, 31, 33, 64, 100, 1027};

}  // namespace

TEST_CASE("scalar kernels match plain loops") {
  const auto& s = kernels::scalar_table();
  const auto a = randoms(37, 1), b = randoms(37, 2);
  double ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ref += static_cast<double>(a[i]) * b[i];
  CHECK(s.dot(a.data(), b.data(), a.size()) == doctest::Approx(ref).epsilon(1e-5));

  auto y = b;
  s.axpy(0.5f, a.data(), y.data(), y.size());
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.5f * a[i] + b[i]);

  std::vector<float> r(a.size());
  s.relu(a.data(), r.data(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(r[i] == (a[i] > 0 ? a[i] : 0.0f));

  auto g = b;
  s.relu_backward(a.data(), g.data(), g.size());
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == (a[i] > 0 ? b[i] : 0.0f));
}

TEST_CASE("scalar sgd steps follow the update rule") {
  const auto& s = kernels::scalar_table();
  std::vector<float> w{1.0f, -2.0f}, g{0.5f, 4.0f}, v{0.1f, 0.0f};
  auto w2 = w;
  s.sgd_step(w2.data(), g.data(), 2, 0.1f, 0.01f, 0.5f);
  CHECK(w2[0] == doctest::Approx(1.0 - 0.1 * (0.25 + 0.01)));
  CHECK(w2[1] == doctest::Approx(-2.0 - 0.1 * (2.0 - 0.02)));
  s.sgd_momentum_step(w.data(), v.data(), g.data(), 2, 0.1f, 0.01f, 0.5f, 0.9f);
  CHECK(v[0] == doctest::Approx(0.09 + 0.25 + 0.01));
  CHECK(w[0] == doctest::Approx(1.0 - 0.1 * (0.09 + 0.25 + 0.01)));
}

TEST_CASE("vector kernels agree with the scalar reference") {
  const auto& ref = kernels::scalar_table();
  const auto tables = vector_tables();
  if (tables.empty()) MESSAGE("no vector kernels on this CPU; only the scalar path is exercised");
  for (const auto* t : tables) {
    CAPTURE(t->name);
    for (std::size_t n : kLengths) {
      CAPTURE(n);
      const auto a = randoms(n, 10 + n), b = randoms(n, 20 + n);
      double mag = 0.0;
      for (std::size_t i = 0; i < n; ++i) mag += std::abs(static_cast<double>(a[i]) * b[i]);
      // Reassociation error is bounded by n * eps * sum|a_i b_i|.
      const double tol = 4.0 * (n + 1) * 1.2e-7 * (mag + 1.0);
      CHECK(std::abs(t->dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <= tol);

      auto y1 = b, y2 = b;
      ref.axpy(-0.7f, a.data(), y1.data(), n);
      t->axpy(-0.7f, a.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(y2[i] == doctest::Approx(y1[i]).epsilon(1e-6));

      std::vector<float> r1(n), r2(n);
      ref.relu(a.data(), r1.data(), n);
      t->relu(a.data(), r2.data(), n);
      CHECK(r1 == r2);

      auto g1 = b, g2 = b;
      ref.relu_backward(a.data(), g1.data(), n);
      t->relu_backward(a.data(), g2.data(), n);
      CHECK(g1 == g2);

      auto w1 = a, w2 = a;
      ref.sgd_step(w1.data(), b.data(), n, 0.01f, 1e-5f, 0.0625f);
      t->sgd_step(w2.data(), b.data(), n, 0.01f, 1e-5f, 0.0625f);
      for (std::size_t i = 0; i < n; ++i) CHECK(w2[i] == doctest::Approx(w1[i]).epsilon(1e-6));

      auto m1 = a, m2 = a;
      auto v1 = randoms(n, 30 + n), v2 = v1;
      ref.sgd_momentum_step(m1.data(), v1.data(), b.data(), n, 0.01f, 1e-5f, 0.0625f, 0.9f);
      t->sgd_momentum_step(m2.data(), v2.data(), b.data(), n, 0.01f, 1e-5f, 0.0625f, 0.9f);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(v2[i] == doctest::Approx(v1[i]).epsilon(1e-6));
        CHECK(m2[i] == doctest::Approx(m1[i]).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("vector kernels handle unaligned pointers") {
  for (const auto* t : vector_tables()) {
    const auto a = randoms(70, 5), b = randoms(70, 6);
    const float r = t->dot(a.data() + 1, b.data() + 3, 61);
    const float s = kernels::scalar_table().dot(a.data() + 1, b.data() + 3, 61);
    CHECK(r == doctest::Approx(s).epsilon(1e-5));
  }
}

TEST_CASE("active table is one of the compiled tables") {
  const auto& t = kernels::active();
  const bool known = &t == &kernels::scalar_table() || &t == kernels::avx2_table() ||
                     &t == kernels::neon_table();
  CHECK(known);
}
