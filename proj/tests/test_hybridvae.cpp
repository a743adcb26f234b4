#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "glyco/error.hpp"
#include "glyco/hybridvae.hpp"
#include "glyco/textio.hpp"
#include "test_support.hpp"

using namespace glyco;

namespace {

HybridConfig tiny_config() {
  HybridConfig cfg;
  cfg.encoder.layers = 1;
  cfg.encoder.hidden = 4;
  cfg.embed_dim = 2;
  return cfg;
}

Dataset small_cohort(int persons, int records, std::uint64_t seed = 5) {
  auto spec = testing::small_spec(persons, records);
  return generate_cohort(spec, seed).data;
}

EncoderBatch batch_of(const Dataset& d, std::size_t n, const InputNormalizer& norm) {
  std::vector<const PpgrRecord*> ptrs;
  for (std::size_t i = 0; i < n; ++i) ptrs.push_back(&d.records[i]);
  return make_encoder_batch(ptrs, norm);
}

}  // namespace

TEST_CASE("normalizer and batch masks") {
  auto d = small_cohort(1, 2);
  d.records[0].glucose[5].reset();
  d.records[0].meals[12][3].reset();
  const auto norm = InputNormalizer::fit(d);
  CHECK(norm.glucose_sd >= 1.0);
  CHECK(InputNormalizer::from_vector(norm.to_vector()).to_vector() == norm.to_vector());
  const auto b = batch_of(d, 2, norm);
  CHECK(b.size() == 2);
  CHECK(b.cgm_mask[5](0, 0) == 0.0);
  CHECK(b.cgm[5](0, 0) == 0.0);
  CHECK(b.glucose_mask(0, 5) == 0.0);
  CHECK(b.meal_mask[12](0, 0) == 0.0);
  CHECK(b.meal[12].row(0).isZero());
  CHECK(b.meal_mask[12](1, 0) == 1.0);
  CHECK(b.demo[0](0, 2) + b.demo[0](0, 3) == 1.0);
}

TEST_CASE("posterior starts near the prior and respects shapes") {
  const auto d = small_cohort(1, 1);
  HybridModel model(tiny_config(), InputNormalizer::fit(d), 1);
  const auto q = model.encode(d.records[0]);
  for (int i = 0; i < LatentLayout::kTotal; ++i) CHECK(q.sd[i] > 0.0);
  CHECK(model.sigma_obs() == doctest::Approx(5.0));
  const auto e = model.embed(d.records[0]);
  CHECK(e.values[1] >= 80.0);
  CHECK(e.values[1] <= 200.0);
}

TEST_CASE("beta zero ablation leaves the reconstruction term") {
  const auto d = small_cohort(1, 1);
  HybridModel model(tiny_config(), InputNormalizer::fit(d), 1);
  const auto r0 = model.elbo(d.records[0], 3, 0.0, false);
  CHECK(r0.elbo == r0.recon);
  CHECK(r0.n_obs == kSeqLen);
  const auto r1 = model.elbo(d.records[0], 3, 0.5, false);
  CHECK(r1.beta_eff == doctest::Approx(0.5 * 60 / 70));
  CHECK(r1.elbo == doctest::Approx(r1.recon - r1.beta_eff * r1.kl));
  CHECK(r1.kl > 0.0);
}

TEST_CASE("collapsed posterior gives the log-likelihood at its mean") {
  const auto d = small_cohort(1, 1);
  HybridModel model(tiny_config(), InputNormalizer::fit(d), 2);
  const auto batch = batch_of(d, 1, model.normalizer());
  auto q = model.encode(batch);
  q.sd = nn::Tensor::constant(nn::Matrix::Constant(1, LatentLayout::kTotal, 1e-9));
  nn::Rng rng(4);
  const auto terms = model.elbo_terms(q, batch, 0.0, false, rng);

  std::array<double, LatentLayout::kTotal> z{};
  for (int i = 0; i < LatentLayout::kTotal; ++i) z[i] = q.mean.value()(0, i);
  const auto g = model.decode_mean(z);
  const double s = model.sigma_obs();
  double ll = 0.0;
  for (int t = 0; t < kSeqLen; ++t) {
    const double r = *d.records[0].glucose[t] - g[t];
    ll += -0.5 * std::log(2.0 * M_PI * s * s) - 0.5 * r * r / (s * s);
  }
  CHECK(terms.recon.item() == doctest::Approx(ll).epsilon(1e-6));
}

TEST_CASE("missing readings drop out of the likelihood") {
  auto d = small_cohort(1, 1);
  HybridModel model(tiny_config(), InputNormalizer::fit(d), 2);
  const auto base = model.elbo(d.records[0], 9, 0.0, false);
  d.records[0].glucose[30] = *d.records[0].glucose[30] + 40.0;
  const auto moved = model.elbo(d.records[0], 9, 0.0, false);
  CHECK(moved.recon != base.recon);
  d.records[0].glucose[30].reset();
  const auto missing = model.elbo(d.records[0], 9, 0.0, false);
  CHECK(missing.n_obs == kSeqLen - 1);

  for (auto& g : d.records[0].glucose) g.reset();
  CHECK_THROWS_AS(model.elbo(d.records[0], 9, 0.0, false), Error);
}

TEST_CASE("full ELBO gradient matches finite differences") {
  const auto d = small_cohort(1, 2);
  HybridModel model(tiny_config(), InputNormalizer::fit(d), 3);
  const auto batch = batch_of(d, 2, model.normalizer());
  auto loss = [&] {
    nn::Rng rng(11);
    const auto q = model.encode(batch);
    const auto terms = model.elbo_terms(q, batch, 0.3, false, rng);
    return nn::scale(nn::sum(terms.elbo), -0.5);
  };
  const auto r = nn::grad_check(loss, model.parameters(), 80, 1e-4, 5);
  INFO(r.worst);
  CHECK(r.checked > 0);
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("training is deterministic and improves the fit") {
  const auto d = small_cohort(2, 5);
  REQUIRE(d.records.size() == 20);
  auto run = [&] {
    HybridModel model(HybridConfig{}, InputNormalizer::fit(d), 7);
    TrainOptions o;
    o.epochs = 60;
    o.batch = 4;
    o.seed = 13;
    auto res = train(d, model, o);
    return std::make_pair(std::move(model), std::move(res));
  };
  auto [m1, r1] = run();
  auto [m2, r2] = run();
  REQUIRE(r1.curve.size() == 60);
  for (std::size_t i = 0; i < r1.curve.size(); ++i) CHECK(r1.curve[i].elbo == r2.curve[i].elbo);
  CHECK(r1.curve.back().elbo > r1.curve.front().elbo);

  double se = 0.0;
  int n = 0;
  for (const auto& r : d.records) {
    const auto rec = m1.reconstruct(r);
    for (int t = 0; t < kSeqLen; ++t) {
      if (!r.glucose[t]) continue;
      se += std::pow(rec.glucose[t] - *r.glucose[t], 2);
      ++n;
      CHECK(rec.u[t] >= 0.0);
      CHECK(rec.u[t] <= 1000.0);
    }
    const auto e = m1.embed(r);
    CHECK(e.values[0] >= 10.0);
    CHECK(e.values[0] <= 60.0);
  }
  CHECK(std::sqrt(se / n) < 10.0);
  CHECK(m1.encode(d.records[0]).mean == m2.encode(d.records[0]).mean);
}

TEST_CASE("training rejects empty input and unusable records") {
  Dataset empty;
  const auto d = small_cohort(1, 1);
  HybridModel model(tiny_config(), InputNormalizer::fit(d), 1);
  CHECK_THROWS_AS(train(empty, model, TrainOptions{}), Error);
  Dataset bad = d;
  for (auto& g : bad.records[0].glucose) g.reset();
  try {
    train(bad, model, TrainOptions{});
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateRecord);
    CHECK(std::string(e.what()).find(bad.records[0].ppgr_id) != std::string::npos);
  }
}

TEST_CASE("config round trip") {
  HybridConfig cfg = tiny_config();
  cfg.u_dropout = 0.25;
  KeyValueConfig kv;
  cfg.write(kv);
  const auto back = HybridConfig::read(kv);
  CHECK(back.encoder.hidden == 4);
  CHECK(back.u_dropout == 0.25);
  CHECK(back.prior.mean == cfg.prior.mean);
  kv.set("hybrid.u_dropout", "1.5");
  CHECK_THROWS_AS(HybridConfig::read(kv), Error);
}

TEST_CASE("encoder handles missing meals and reacts to glucose") {
  auto d = small_cohort(1, 1);
  HybridModel model(HybridConfig{}, InputNormalizer::fit(d), 4);
  PpgrRecord r = d.records[0];
  const auto base = model.encode(r);
  CHECK(model.encode(r).mean == base.mean);

  r.glucose[30] = *r.glucose[30] + 50.0;
  const auto moved = model.encode(r);
  bool changed = false;
  for (int t = 0; t < LatentLayout::kU; ++t) changed = changed || moved.mean[t] != base.mean[t];
  CHECK(changed);

  for (auto& row : r.meals)
    for (auto& v : row) v.reset();
  const auto blind = model.encode(r);
  for (int i = 0; i < LatentLayout::kTotal; ++i) {
    CHECK(std::isfinite(blind.mean[i]));
    CHECK(std::isfinite(blind.sd[i]));
  }
}

TEST_CASE("masked readings remove exactly their summands") {
  const auto d = small_cohort(1, 1);
  HybridModel model(tiny_config(), InputNormalizer::fit(d), 2);
  auto batch = batch_of(d, 1, model.normalizer());
  const auto q = model.encode(batch);
  nn::Rng rng1(8), rng2(8);
  const auto full = model.elbo_terms(q, batch, 0.0, false, rng1);
  const int drop[] = {3, 30, 47};
  for (int t : drop) batch.glucose_mask(0, t) = 0.0;
  const auto masked = model.elbo_terms(q, batch, 0.0, false, rng2);
  const double s = model.sigma_obs();
  double removed = 0.0;
  for (int t : drop) {
    const double r = batch.glucose(0, t) - full.glucose.value()(0, t);
    removed += -0.5 * std::log(2.0 * M_PI * s * s) - 0.5 * r * r / (s * s);
  }
  CHECK(full.recon.item() - masked.recon.item() == doctest::Approx(removed).epsilon(1e-12));
}

TEST_CASE("beta zero excludes the KL from the gradient") {
  const auto d = small_cohort(1, 2);
  HybridModel model(tiny_config(), InputNormalizer::fit(d), 3);
  const auto batch = batch_of(d, 2, model.normalizer());
  auto grads = [&](bool use_elbo) {
    nn::Rng rng(21);
    model.parameters().zero_grad();
    const auto terms = model.elbo_terms(model.encode(batch), batch, 0.0, false, rng);
    nn::backward(nn::scale(nn::sum(use_elbo ? terms.elbo : terms.recon), -1.0));
    std::vector<nn::Matrix> out;
    for (const auto& t : model.parameters().tensors()) out.push_back(t.grad());
    return out;
  };
  const auto a = grads(true);
  const auto b = grads(false);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("zero carb latent decays toward basal") {
  const auto d = small_cohort(1, 1);
  HybridModel model(tiny_config(), InputNormalizer::fit(d), 1);
  std::array<double, LatentLayout::kTotal> z{};
  for (int t = 0; t < LatentLayout::kU; ++t) z[t] = -60.0;
  z[LatentLayout::kX0Offset] = 1.5;  // G0 well above the basal level
  for (int i = 1; i < LatentLayout::kX0; ++i) z[LatentLayout::kX0Offset + i] = -30.0;
  const auto c = constrain_latent(z);
  const auto g = model.decode_mean(z);
  const double gb = c[LatentLayout::kWOffset + 1];
  CHECK(g[0] > gb);
  CHECK(std::abs(g[59] - gb) < std::abs(g[0] - gb));
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto d = small_cohort(1, 3);
  HybridModel model(tiny_config(), InputNormalizer::fit(d), 6);
  TrainOptions o;
  o.epochs = 2;
  o.batch = 2;
  const auto res = train(d, model, o);
  const auto ckpt = hybrid_checkpoint(model, res.adam, 6);
  const auto back = checkpoint_from_json(checkpoint_to_json(ckpt));
  CHECK(back.config_hash() == ckpt.config_hash());
  CHECK(back.adam.step == res.adam.step);
  REQUIRE(back.adam.m.size() == res.adam.m.size());
  CHECK(back.adam.m[0] == res.adam.m[0]);
  const auto restored = hybrid_from_checkpoint(back);
  CHECK(restored.sigma_obs() == model.sigma_obs());
  CHECK(restored.encode(d.records[1]).mean == model.encode(d.records[1]).mean);

  auto broken = ckpt;
  broken.params.pop_back();
  CHECK_THROWS_AS(hybrid_from_checkpoint(broken), Error);
  std::string text = checkpoint_to_json(ckpt);
  text.replace(text.find("hybrid.hidden = 4"), 17, "hybrid.hidden = 5");
  CHECK_THROWS_AS(checkpoint_from_json(text), Error);
  CHECK_THROWS_AS(checkpoint_from_json("{"), Error);
}
