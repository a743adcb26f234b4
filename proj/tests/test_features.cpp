#include <cmath>
#include <random>

#include "doctest.h"
#include "glyco/error.hpp"
#include "glyco/features.hpp"
#include "test_support.hpp"

using namespace glyco;

namespace {

using Trace = std::array<double, kSeqLen>;

ExpertFeatures of(const Trace& t) { return expert_features(std::span<const double, kSeqLen>(t)); }

Trace random_trace(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(60.0, 250.0);
  Trace t;
  for (double& x : t) x = u(rng);
  return t;
}

}  // namespace

TEST_CASE("flat trace") {
  Trace t;
  t.fill(100.0);
  const auto f = of(t);
  const std::array<double, 10> want{100, 0, 0, 100, 100, 100, 295, 10, 0, 0};
  CHECK(f.to_array() == want);
}

TEST_CASE("split trace time in range") {
  Trace t;
  for (int i = 0; i < kSeqLen; ++i) t[i] = i < 30 ? 150.0 : 200.0;
  CHECK(of(t).tir == 50.0);
}

TEST_CASE("ramp statistics") {
  Trace t;
  for (int i = 0; i < kSeqLen; ++i) t[i] = 100.0 + i;
  const auto f = of(t);
  CHECK(f.mean == doctest::Approx(129.5).epsilon(1e-12));
  CHECK(std::abs(f.sd - std::sqrt((60.0 * 60.0 - 1.0) / 12.0)) < 1e-9);
  CHECK(std::abs(f.sd - 17.318) < 1e-3);
  CHECK(f.mage == 0.0);
  CHECK(f.arc_length == doctest::Approx(59.0 * std::sqrt(26.0)));
  // Increments above the t=12 level form a triangle: 0..47 over 47 intervals of 5 min.
  CHECK(f.iauc == doctest::Approx(0.5 * 47.0 * 5.0 * 47.0));
}

TEST_CASE("shift equivariance") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> shift(-40.0, 40.0);
  for (int k = 0; k < 100; ++k) {
    const Trace t = random_trace(rng);
    const double c = shift(rng);
    Trace s = t;
    for (double& x : s) x += c;
    const auto a = of(t);
    const auto b = of(s);
    CHECK(b.mean == doctest::Approx(a.mean + c));
    CHECK(b.max == doctest::Approx(a.max + c));
    CHECK(b.min == doctest::Approx(a.min + c));
    CHECK(b.sd == doctest::Approx(a.sd));
    CHECK(b.mage == doctest::Approx(a.mage));
    CHECK(b.iauc == doctest::Approx(a.iauc));
    CHECK(b.arc_length == doctest::Approx(a.arc_length));
    CHECK(b.cv == doctest::Approx(100.0 * b.sd / b.mean));
    CHECK(b.j_index == doctest::Approx(0.001 * std::pow(b.mean + b.sd, 2)));
    int in = 0;
    for (double x : s) in += (x >= 70.0 && x <= 180.0);
    CHECK(b.tir == doctest::Approx(100.0 * in / 60.0));
  }
}

TEST_CASE("feature invariants on random traces") {
  std::mt19937_64 rng(9);
  for (int k = 0; k < 50; ++k) {
    const auto f = of(random_trace(rng));
    CHECK(f.min <= f.mean);
    CHECK(f.mean <= f.max);
    CHECK(f.tir >= 0.0);
    CHECK(f.tir <= 100.0);
    CHECK(f.mage >= 0.0);
    CHECK(f.iauc >= 0.0);
  }
}

TEST_CASE("mage") {
  const double down[] = {200, 180, 150, 150, 120, 90};
  CHECK(mage(down, 1.0) == 0.0);
  // Two big swings with a small wiggle riding on the rise.
  const double wave[] = {100, 150, 200, 195, 205, 100, 100, 180, 170};
  CHECK(mage(wave, 20.0) == doctest::Approx((105.0 + 80.0) / 2.0));
  CHECK(mage(wave, 200.0) == 0.0);
}

TEST_CASE("iauc ignores the pre-meal hour") {
  Trace t;
  for (int i = 0; i < kSeqLen; ++i) t[i] = 120.0 + 30.0 * std::sin(i / 7.0);
  Trace s = t;
  for (int i = 0; i < kMealIndex; ++i) s[i] = 300.0 - i;
  CHECK(of(s).iauc == of(t).iauc);
}

TEST_CASE("records with gaps") {
  auto r = testing::flat_record("p", "p_r0", 100.0);
  r.glucose[10].reset();
  r.glucose[0].reset();
  CHECK(expert_features(r).mean == 100.0);
  for (int t = 1; t < kSeqLen; ++t) r.glucose[t].reset();
  CHECK_THROWS_AS(expert_features(r), Error);
}
