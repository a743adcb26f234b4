#include <cmath>
#include <random>

#include "doctest.h"
#include "glyco/error.hpp"
#include "glyco/transforms.hpp"

using namespace glyco;

TEST_CASE("constrain examples") {
  CHECK(constrain(0.0, bounds::kGb) == doctest::Approx(140.0).epsilon(1e-15));
  for (int dim = 0; dim < LatentLayout::kTotal; ++dim) {
    const auto iv = LatentLayout::interval(dim);
    CHECK(std::abs(constrain(50.0, iv) - iv.hi) <= 1e-9 * iv.width());
  }
  CHECK(unconstrain(constrain(1.3, bounds::kSG), bounds::kSG) == doctest::Approx(1.3).epsilon(1e-9));
  CHECK(constrain(unconstrain(150.0, bounds::kGb), bounds::kGb) == doctest::Approx(150.0).epsilon(1e-12));
}

TEST_CASE("unconstrain midpoint and boundary rejection") {
  CHECK(std::abs(unconstrain(140.0, bounds::kGb)) < 1e-15);
  CHECK_THROWS_AS(unconstrain(bounds::kGb.lo, bounds::kGb), Error);
  CHECK_THROWS_AS(unconstrain(bounds::kGb.hi, bounds::kGb), Error);
  try {
    unconstrain(79.0, bounds::kGb);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::OutOfInterval);
  }
}

TEST_CASE("round trips, monotonicity and derivative across every latent interval") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> frac(1e-6, 1.0 - 1e-6);
  std::uniform_real_distribution<double> xs(-8.0, 8.0);
  for (int dim = 0; dim < LatentLayout::kTotal; ++dim) {
    const auto iv = LatentLayout::interval(dim);
    for (int i = 0; i < 200; ++i) {
      const double y = iv.lo + frac(rng) * iv.width();
      CHECK(std::abs(constrain(unconstrain(y, iv), iv) - y) <= 1e-9 * std::max(std::abs(y), iv.width()));
      const double a = xs(rng), b = xs(rng);
      if (a < b) CHECK(constrain(a, iv) < constrain(b, iv));
    }
  }
  // Analytic derivative against central differences at 100 random points.
  for (int i = 0; i < 100; ++i) {
    const auto iv = LatentLayout::interval(static_cast<int>(rng() % LatentLayout::kTotal));
    const double x = xs(rng), h = 1e-5;
    const double fd = (constrain(x + h, iv) - constrain(x - h, iv)) / (2 * h);
    const double an = constrain_derivative(x, iv);
    CHECK(std::abs(fd - an) <= 1e-6 * std::abs(an));
  }
}

TEST_CASE("default prior matches the expert values") {
  const auto p = default_prior();
  const std::array<double, 6> w{30.0, 120.0, 1e-2, 1.0 / 30.0, 5e-4, 1.0};
  for (int i = 0; i < 6; ++i) {
    const int dim = LatentLayout::kWOffset + i;
    CHECK(constrain(p.mean[dim], LatentLayout::interval(dim)) == doctest::Approx(w[i]).epsilon(1e-12));
  }
  const std::array<double, 4> x0{120.0, 0.1, 0.1, 20.0};
  for (int i = 0; i < 4; ++i) {
    const int dim = LatentLayout::kX0Offset + i;
    CHECK(constrain(p.mean[dim], LatentLayout::interval(dim)) == doctest::Approx(x0[i]).epsilon(1e-12));
  }
  CHECK(p.sd[LatentLayout::kWOffset] == 2.0);
  CHECK(p.sd[LatentLayout::kX0Offset + 3] == 2.0);
  for (int t = 0; t < LatentLayout::kU; ++t) {
    CHECK(p.mean[t] == 0.0);
    CHECK(p.sd[t] == 10.0);
    CHECK(kl_normal(0.0, 10.0, p.mean[t], p.sd[t]) == 0.0);
  }
}

TEST_CASE("closed-form KL by hand") {
  CHECK(kl_normal(1.0, 1.0, 0.0, 1.0) == doctest::Approx(0.5));
  CHECK(kl_normal(0.3, 2.0, 0.3, 2.0) == 0.0);
  CHECK(kl_normal(0.0, 2.0, 0.0, 1.0) == doctest::Approx(std::log(0.5) + 2.0 - 0.5));
}
