#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "glyco/error.hpp"
#include "glyco/mechsim.hpp"
#include "glyco/textio.hpp"
#include "test_support.hpp"

using namespace glyco;

namespace {

MechParams random_params(std::mt19937_64& rng) {
  std::array<double, 6> w{};
  std::uniform_real_distribution<double> f(0.0, 1.0);
  for (int i = 0; i < 6; ++i) {
    const auto iv = LatentLayout::w_intervals()[i];
    w[i] = iv.lo + f(rng) * iv.width();
  }
  return MechParams::from_array(w);
}

CarbRate pulse(int at, double rate, int width = 3) {
  CarbRate u{};
  for (int k = 0; k < width; ++k) u[at + k] = rate;
  return u;
}

}  // namespace

TEST_CASE("derivatives at steady state are zero") {
  MechParams p;
  const auto d = derivatives({p.G_b, 0.0, 0.0, 0.0}, p, 0.0, 100.0);
  CHECK(d.G == 0.0);
  CHECK(d.X == 0.0);
  CHECK(d.G1 == 0.0);
  CHECK(d.G2 == 0.0);
}

TEST_CASE("hand-evaluated glucose derivative") {
  MechParams p;
  p.G_b = 120.0;
  p.S_G = 0.01;
  p.tau_m = 30.0;
  const auto d = derivatives({180.0, 0.02, 0.0, 30.0}, p, 0.0, 100.0);
  // -X*G - S_G*(G - G_b) + G2/tau = -3.6 - 0.6 + 1.0
  CHECK(d.G == doctest::Approx(-3.2).epsilon(1e-14));
}

TEST_CASE("disabled insulin pathway keeps X at zero") {
  MechParams p;
  p.M_I = 0.0;
  for (double g : {50.0, 120.0, 300.0}) CHECK(derivatives({g, 0.0, 0.5, 3.0}, p, 500.0, 100.0).X == 0.0);
  const auto traj = simulate({200.0, 0.0, 0.0, 0.0}, p, pulse(12, 800.0), SimConfig{});
  for (const auto& s : traj) CHECK(s.X == 0.0);
}

TEST_CASE("non-finite state is rejected") {
  CHECK_THROWS_AS(derivatives({NAN, 0, 0, 0}, MechParams{}, 0.0, 100.0), Error);
}

TEST_CASE("fixed point holds for random in-range parameters") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto p = random_params(rng);
    const auto traj = simulate({p.G_b, 0.0, 0.0, 0.0}, p, CarbRate{}, SimConfig{});
    for (const auto& s : traj) CHECK(std::abs(s.G - p.G_b) < 1e-9);
  }
}

TEST_CASE("single meal rises then decays; larger V_G lowers the peak") {
  MechParams p;
  const MechState x0{p.G_b, 0.0, 0.0, 0.0};
  const auto u = pulse(12, 800.0);
  const auto g = glucose_of(simulate(x0, p, u, SimConfig{}));
  const double peak = *std::max_element(g.begin(), g.end());
  CHECK(peak > p.G_b);
  CHECK(g[59] < peak);

  SimConfig wide;
  wide.V_G = 200.0;
  const auto g2 = glucose_of(simulate(x0, p, u, wide));
  const double peak2 = *std::max_element(g2.begin(), g2.end());
  CHECK(peak2 - p.G_b < peak - p.G_b);
}

TEST_CASE("decay toward basal under the negative-feedback sign") {
  MechParams p;
  p.M_I = 0.0;
  const auto g = glucose_of(simulate({p.G_b + 40.0, 0.0, 0.0, 0.0}, p, CarbRate{}, SimConfig{}));
  for (int t = 1; t < kSeqLen; ++t) {
    CHECK(g[t] < g[t - 1]);
    CHECK(g[t] > p.G_b);
  }
}

TEST_CASE("gut compartments drain without intake") {
  const auto traj = simulate({120.0, 0.0, 1.0, 50.0}, MechParams{}, CarbRate{}, SimConfig{});
  for (int t = 1; t < kSeqLen; ++t) {
    CHECK(traj[t].G1 < traj[t - 1].G1);
    CHECK(traj[t].G1 >= 0.0);
    CHECK(traj[t].G2 >= 0.0);
  }
}

TEST_CASE("simulate output starts at x0 and blowups are reported") {
  MechParams p;
  const MechState x0{150.0, 0.01, 0.5, 10.0};
  CHECK(simulate(x0, p, CarbRate{}, SimConfig{})[0].G == 150.0);
  SimConfig tiny;
  tiny.V_G = 1e-4;
  CarbRate huge{};
  huge.fill(1000.0);
  CHECK_THROWS_AS(simulate(x0, p, huge, tiny), Error);
}

TEST_CASE("adjoint matches finite differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> f(-1.0, 1.0);
  const SimConfig cfg;
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = random_params(rng);
    const MechState x0{p.G_b + 30.0 * f(rng), 0.01 + 0.005 * f(rng), 0.5, 10.0 + 5.0 * f(rng)};
    CarbRate u = pulse(12, 600.0);
    u[30] = 300.0;
    std::array<double, kSeqLen> w{};
    for (auto& v : w) v = f(rng);
    auto loss = [&](const MechState& s, const MechParams& q, const CarbRate& uu) {
      const auto g = glucose_of(simulate(s, q, uu, cfg));
      double acc = 0.0;
      for (int t = 0; t < kSeqLen; ++t) acc += w[t] * g[t];
      return acc;
    };
    const auto grad = simulate_vjp(x0, p, u, cfg, w);
    auto rel = [](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}); };

    const auto pa = p.to_array();
    for (int i = 0; i < 6; ++i) {
      const double h = 1e-6 * std::abs(pa[i]);
      auto up = pa, dn = pa;
      up[i] += h;
      dn[i] -= h;
      const double fd = (loss(x0, MechParams::from_array(up), u) - loss(x0, MechParams::from_array(dn), u)) / (2 * h);
      CHECK(rel(grad.params[i], fd) < 1e-4);
    }
    const auto xa = x0.to_array();
    for (int i = 0; i < 4; ++i) {
      const double h = 1e-5;
      auto up = xa, dn = xa;
      up[i] += h;
      dn[i] -= h;
      const double fd = (loss(MechState::from_array(up), p, u) - loss(MechState::from_array(dn), p, u)) / (2 * h);
      CHECK(rel(grad.x0[i], fd) < 1e-4);
    }
    for (int t : {5, 12, 13, 30, 58}) {
      auto up = u, dn = u;
      up[t] += 1e-3;
      dn[t] -= 1e-3;
      const double fd = (loss(x0, p, up) - loss(x0, p, dn)) / 2e-3;
      CHECK(rel(grad.u[t], fd) < 1e-4);
    }
    CHECK(grad.u[59] == 0.0);
  }
}

TEST_CASE("carb pulse conversion") {
  std::array<double, kSeqLen> grams{};
  grams[12] = 9.0;
  const auto u = carbs_to_rate(grams);
  CHECK(u[11] == 0.0);
  CHECK(u[12] == doctest::Approx(600.0));
  CHECK(u[14] == doctest::Approx(600.0));
  CHECK(u[15] == 0.0);
  grams[13] = 30.0;
  CHECK(carbs_to_rate(grams)[13] == 1000.0);
}

TEST_CASE("cohort generation is deterministic") {
  auto spec = glyco::testing::small_spec(2, 3);
  const auto a = generate_cohort(spec, 7);
  const auto b = generate_cohort(spec, 7);
  CHECK(glyco::testing::to_csv(a.data) == glyco::testing::to_csv(b.data));
  std::ostringstream ta, tb;
  write_ground_truth_csv(ta, a.truth, {});
  write_ground_truth_csv(tb, b.truth, {});
  CHECK(ta.str() == tb.str());
  CHECK(glyco::testing::to_csv(generate_cohort(spec, 8).data) != glyco::testing::to_csv(a.data));
  for (const auto& r : a.data.records) CHECK(validate(r).empty());

  std::istringstream in(ta.str());
  const auto back = read_ground_truth_csv(in);
  REQUIRE(back.size() == a.truth.size());
  CHECK(back[3].u == a.truth[3].u);
  CHECK(back[3].params.G_b == a.truth[3].params.G_b);
  CHECK(back[3].meal_times == a.truth[3].meal_times);
}

TEST_CASE("identity corruption reproduces simulate output and true carbs") {
  auto spec = glyco::testing::small_spec(1, 4);
  spec.disable_corruption();
  const auto c = generate_cohort(spec, 3);
  for (std::size_t i = 0; i < c.data.records.size(); ++i) {
    const auto& r = c.data.records[i];
    const auto& gt = c.truth[i];
    const auto g = glucose_of(simulate(gt.x0, gt.params, gt.u, spec.sim));
    for (int t = 0; t < kSeqLen; ++t) CHECK(*r.glucose[t] == g[t]);
    CHECK(carbs_to_rate(logged_carbs(r)) == gt.u);
  }
}

TEST_CASE("groups with separated basal glucose produce separated fasting glucose") {
  auto spec = CohortSpec::default_spec();
  spec.groups[0].params[1] = {110.0, 10.0};
  spec.groups[1].params[1] = {150.0, 15.0};
  for (auto& g : spec.groups) {
    g.persons = 20;
    g.records_per_person = 3;
  }
  const auto c = generate_cohort(spec, 21);
  double sum[2] = {0, 0};
  int n[2] = {0, 0};
  for (std::size_t i = 0; i < c.data.records.size(); ++i) {
    const int g = c.truth[i].group == "t2d" ? 1 : 0;
    for (int t = 0; t < kMealIndex; ++t) {
      if (auto v = c.data.records[i].glucose[t]) {
        sum[g] += *v;
        ++n[g];
      }
    }
  }
  CHECK(sum[1] / n[1] - sum[0] / n[0] > 20.0);
}

TEST_CASE("invalid cohort specs") {
  auto spec = CohortSpec::default_spec();
  spec.groups.pop_back();
  CHECK_THROWS_AS(generate_cohort(spec, 1), Error);
  spec = CohortSpec::default_spec();
  spec.delete_prob = 1.5;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = CohortSpec::default_spec();
  spec.groups[0].params[0].mean = 5.0;
  CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("cohort spec survives a config round trip") {
  auto spec = CohortSpec::default_spec();
  spec.noise_sd = 2.5;
  spec.groups[1].persons = 4;
  KeyValueConfig cfg;
  spec.write(cfg);
  const auto back = CohortSpec::from_config(KeyValueConfig::parse(cfg.to_text()));
  CHECK(back.noise_sd == 2.5);
  CHECK(back.groups.size() == 2);
  CHECK(back.groups[1].persons == 4);
  CHECK(back.groups[1].params[1].mean == spec.groups[1].params[1].mean);
}
