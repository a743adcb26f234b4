#include "glyco/hybridvae.hpp"

#include <algorithm>
#include <cmath>

#include "glyco/error.hpp"
#include "glyco/textio.hpp"

namespace glyco {

using nn::Matrix;
using nn::Tensor;

// --- normalizer -------------------------------------------------------------------

InputNormalizer InputNormalizer::fit(const Dataset& data) {
  InputNormalizer n;
  double gs = 0.0, gss = 0.0;
  long long gn = 0;
  std::array<double, kNumMealChannels> pos_sum{};
  std::array<long long, kNumMealChannels> pos_n{};
  double as = 0.0, ass = 0.0, ws = 0.0, wss = 0.0;
  for (const auto& r : data.records) {
    for (int t = 0; t < kSeqLen; ++t) {
      if (r.glucose[t]) {
        gs += *r.glucose[t];
        gss += *r.glucose[t] * *r.glucose[t];
        ++gn;
      }
      for (int c = 0; c < kNumMealChannels; ++c) {
        if (r.meals[t][c] && *r.meals[t][c] > 0.0) {
          pos_sum[c] += *r.meals[t][c];
          ++pos_n[c];
        }
      }
    }
    as += r.demographics.age;
    ass += r.demographics.age * r.demographics.age;
    ws += r.demographics.weight;
    wss += r.demographics.weight * r.demographics.weight;
  }
  auto sd_of = [](double s, double ss, double count) {
    const double m = s / count;
    return std::max(1.0, std::sqrt(std::max(0.0, ss / count - m * m)));
  };
  if (gn > 0) {
    n.glucose_mean = gs / gn;
    n.glucose_sd = sd_of(gs, gss, static_cast<double>(gn));
  }
  for (int c = 0; c < kNumMealChannels; ++c) {
    n.meal_scale[c] = pos_n[c] > 0 ? std::max(1.0, pos_sum[c] / pos_n[c]) : 1.0;
  }
  if (!data.records.empty()) {
    const double count = static_cast<double>(data.records.size());
    n.age_mean = as / count;
    n.age_sd = sd_of(as, ass, count);
    n.weight_mean = ws / count;
    n.weight_sd = sd_of(ws, wss, count);
  }
  return n;
}

std::vector<double> InputNormalizer::to_vector() const {
  std::vector<double> v{glucose_mean, glucose_sd};
  v.insert(v.end(), meal_scale.begin(), meal_scale.end());
  v.insert(v.end(), {age_mean, age_sd, weight_mean, weight_sd});
  return v;
}

InputNormalizer InputNormalizer::from_vector(std::span<const double> v) {
  if (v.size() != 2 + kNumMealChannels + 4) throw Error(ErrorKind::InvalidConfig, "normalizer needs 12 values");
  InputNormalizer n;
  n.glucose_mean = v[0];
  n.glucose_sd = v[1];
  for (int c = 0; c < kNumMealChannels; ++c) n.meal_scale[c] = v[2 + c];
  n.age_mean = v[8];
  n.age_sd = v[9];
  n.weight_mean = v[10];
  n.weight_sd = v[11];
  return n;
}

EncoderBatch make_encoder_batch(std::span<const PpgrRecord* const> records, const InputNormalizer& norm) {
  const auto B = static_cast<Eigen::Index>(records.size());
  EncoderBatch batch;
  batch.cgm.assign(kSeqLen, Matrix::Zero(B, 1));
  batch.meal.assign(kSeqLen, Matrix::Zero(B, kNumMealChannels));
  batch.demo.assign(kSeqLen, Matrix::Zero(B, kDemographicWidth));
  batch.cgm_mask.assign(kSeqLen, Matrix::Zero(B, 1));
  batch.meal_mask.assign(kSeqLen, Matrix::Zero(B, 1));
  batch.glucose = Matrix::Zero(B, kSeqLen);
  batch.glucose_mask = Matrix::Zero(B, kSeqLen);
  for (Eigen::Index b = 0; b < B; ++b) {
    const PpgrRecord& r = *records[b];
    batch.ids.push_back(r.ppgr_id);
    const double demo[kDemographicWidth] = {(r.demographics.age - norm.age_mean) / norm.age_sd,
                                            (r.demographics.weight - norm.weight_mean) / norm.weight_sd,
                                            r.demographics.sex == Sex::F ? 1.0 : 0.0,
                                            r.demographics.sex == Sex::M ? 1.0 : 0.0};
    for (int t = 0; t < kSeqLen; ++t) {
      if (r.glucose[t]) {
        batch.cgm[t](b, 0) = (*r.glucose[t] - norm.glucose_mean) / norm.glucose_sd;
        batch.cgm_mask[t](b, 0) = 1.0;
        batch.glucose(b, t) = *r.glucose[t];
        batch.glucose_mask(b, t) = 1.0;
      }
      const bool complete = std::all_of(r.meals[t].begin(), r.meals[t].end(), [](const OptReal& v) { return v.has_value(); });
      if (complete) {
        for (int c = 0; c < kNumMealChannels; ++c) batch.meal[t](b, c) = *r.meals[t][c] / norm.meal_scale[c];
        batch.meal_mask[t](b, 0) = 1.0;
      }
      for (int k = 0; k < kDemographicWidth; ++k) batch.demo[t](b, k) = demo[k];
    }
  }
  return batch;
}

ContextEncoder::ContextEncoder(nn::ParameterStore& store, const std::string& name,
                               const nn::RecurrentEncoderConfig& cfg, int embed_dim, nn::Rng& rng)
    : cgm_(store, name + ".embed_cgm", 1, embed_dim, rng),
      meal_(store, name + ".embed_meal", kNumMealChannels, embed_dim, rng),
      demo_(store, name + ".embed_demo", kDemographicWidth, embed_dim, rng) {
  nn::RecurrentEncoderConfig rc = cfg;
  rc.input_dim = 3 * embed_dim;
  encoder_ = nn::RecurrentEncoder(store, name + ".rnn", rc, rng);
}

nn::RecurrentEncoding ContextEncoder::operator()(const EncoderBatch& batch) const {
  std::vector<Tensor> xs;
  xs.reserve(kSeqLen);
  for (int t = 0; t < kSeqLen; ++t) {
    const Tensor c = nn::mul(cgm_(Tensor::constant(batch.cgm[t])), Tensor::constant(batch.cgm_mask[t]));
    const Tensor m = nn::mul(meal_(Tensor::constant(batch.meal[t])), Tensor::constant(batch.meal_mask[t]));
    const Tensor d = demo_(Tensor::constant(batch.demo[t]));
    xs.push_back(nn::concat_cols({c, m, d}));
  }
  return encoder_(xs);
}

// --- config ---------------------------------------------------------------------

void HybridConfig::write(KeyValueConfig& cfg) const {
  cfg.set("hybrid.layers", std::to_string(encoder.layers));
  cfg.set("hybrid.hidden", std::to_string(encoder.hidden));
  cfg.set("hybrid.bidirectional", encoder.bidirectional ? "true" : "false");
  cfg.set("hybrid.embed_dim", std::to_string(embed_dim));
  cfg.set("hybrid.u_dropout", format_real(u_dropout));
  cfg.set("hybrid.sigma_init", format_real(sigma_init));
  cfg.set("hybrid.u_mean_bias", format_real(u_mean_bias));
  cfg.set("hybrid.sd_init", format_real(sd_init));
  cfg.set("sim.substeps", std::to_string(sim.substeps));
  cfg.set("sim.V_G", format_real(sim.V_G));
  prior.write(cfg);
}

HybridConfig HybridConfig::read(const KeyValueConfig& cfg) {
  HybridConfig h;
  h.encoder.layers = static_cast<int>(cfg.get_int("hybrid.layers", h.encoder.layers));
  h.encoder.hidden = static_cast<int>(cfg.get_int("hybrid.hidden", h.encoder.hidden));
  h.encoder.bidirectional = cfg.get_bool("hybrid.bidirectional", h.encoder.bidirectional);
  h.embed_dim = static_cast<int>(cfg.get_int("hybrid.embed_dim", h.embed_dim));
  h.u_dropout = cfg.get_real("hybrid.u_dropout", h.u_dropout);
  h.sigma_init = cfg.get_real("hybrid.sigma_init", h.sigma_init);
  h.u_mean_bias = cfg.get_real("hybrid.u_mean_bias", h.u_mean_bias);
  h.sd_init = cfg.get_real("hybrid.sd_init", h.sd_init);
  h.sim.substeps = static_cast<int>(cfg.get_int("sim.substeps", h.sim.substeps));
  h.sim.V_G = cfg.get_real("sim.V_G", h.sim.V_G);
  h.prior = ExpertPrior::read(cfg);
  if (h.encoder.layers < 1 || h.encoder.hidden < 1 || h.embed_dim < 1 || !(h.u_dropout >= 0.0 && h.u_dropout < 1.0) ||
      !(h.sd_init > 0.0) || h.sim.substeps < 1 || !(h.sim.V_G > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "invalid hybrid model settings");
  }
  return h;
}

// --- model ----------------------------------------------------------------------

namespace {

double inverse_softplus(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

constexpr double kSdFloor = 1e-5;

struct ColumnBounds {
  Eigen::RowVectorXd lo, width;
};

ColumnBounds bounds_for(int offset, int count) {
  ColumnBounds b{Eigen::RowVectorXd(count), Eigen::RowVectorXd(count)};
  for (int i = 0; i < count; ++i) {
    const auto iv = LatentLayout::interval(offset + i);
    b.lo[i] = iv.lo;
    b.width[i] = iv.width();
  }
  return b;
}

Eigen::RowVectorXd as_row(const std::array<double, LatentLayout::kTotal>& a) {
  return Eigen::Map<const Eigen::RowVectorXd>(a.data(), LatentLayout::kTotal);
}

// Shrinks a head's initial weights and sets its bias so the posterior starts
// near the given means with a common sd.
void init_head(nn::Dense& head, std::span<const double> mean_bias, double sd_init) {
  const auto n = static_cast<Eigen::Index>(mean_bias.size());
  head.weight.mutable_value() *= 0.1;
  for (Eigen::Index i = 0; i < n; ++i) {
    head.bias.mutable_value()(0, i) = mean_bias[i];
    head.bias.mutable_value()(0, n + i) = inverse_softplus(sd_init);
  }
}

}  // namespace

HybridModel::HybridModel(const HybridConfig& cfg, const InputNormalizer& norm, std::uint64_t seed)
    : cfg_(cfg), norm_(norm) {
  nn::Rng rng(seed);
  context_ = ContextEncoder(store_, "encoder", cfg.encoder, cfg.embed_dim, rng);
  const int h = context_.output_dim();
  u_head_ = nn::Dense(store_, "head_u", h, 2, rng);
  x0_head_ = nn::Dense(store_, "head_x0", h, 2 * LatentLayout::kX0, rng);
  w_head_ = nn::Dense(store_, "head_w", h, 2 * LatentLayout::kW, rng);
  const double u_bias[1] = {cfg.u_mean_bias};
  init_head(u_head_, u_bias, cfg.sd_init);
  init_head(x0_head_, std::span<const double>(cfg.prior.mean.data() + LatentLayout::kX0Offset, LatentLayout::kX0),
            cfg.sd_init);
  init_head(w_head_, std::span<const double>(cfg.prior.mean.data() + LatentLayout::kWOffset, LatentLayout::kW),
            cfg.sd_init);
  sigma_raw_ = store_.create("sigma_obs_raw", Matrix::Constant(1, 1, unconstrain(cfg.sigma_init, cfg.sigma_range)));
}

Tensor HybridModel::sigma_tensor() const {
  Eigen::RowVectorXd lo(1), width(1);
  lo << cfg_.sigma_range.lo;
  width << cfg_.sigma_range.width();
  return nn::constrain_cols(sigma_raw_, lo, width);
}

double HybridModel::sigma_obs() const { return constrain(sigma_raw_.item(), cfg_.sigma_range); }

PosteriorTensors HybridModel::encode(const EncoderBatch& batch) const {
  const auto enc = context_(batch);
  std::vector<Tensor> u_mean, u_sd;
  u_mean.reserve(kSeqLen);
  u_sd.reserve(kSeqLen);
  for (int t = 0; t < kSeqLen; ++t) {
    const Tensor out = u_head_(enc.outputs[t]);
    u_mean.push_back(nn::slice_cols(out, 0, 1));
    u_sd.push_back(nn::slice_cols(out, 1, 1));
  }
  const Tensor x0 = x0_head_(enc.summary);
  const Tensor w = w_head_(enc.summary);
  const Tensor mean = nn::concat_cols({nn::concat_cols(u_mean), nn::slice_cols(x0, 0, LatentLayout::kX0),
                                       nn::slice_cols(w, 0, LatentLayout::kW)});
  const Tensor raw_sd = nn::concat_cols({nn::concat_cols(u_sd), nn::slice_cols(x0, LatentLayout::kX0, LatentLayout::kX0),
                                         nn::slice_cols(w, LatentLayout::kW, LatentLayout::kW)});
  return {mean, nn::add_scalar(nn::softplus(raw_sd), kSdFloor)};
}

LatentPosterior HybridModel::encode(const PpgrRecord& record) const {
  const PpgrRecord* ptr = &record;
  const auto q = encode(make_encoder_batch(std::span<const PpgrRecord* const>(&ptr, 1), norm_));
  LatentPosterior out;
  for (int i = 0; i < LatentLayout::kTotal; ++i) {
    out.mean[i] = q.mean.value()(0, i);
    out.sd[i] = q.sd.value()(0, i);
  }
  return out;
}

ElboTerms HybridModel::elbo_terms(const PosteriorTensors& q, const EncoderBatch& batch, double beta_hat,
                                  bool training, nn::Rng& rng) const {
  const Eigen::Index B = batch.size();
  Matrix eps(B, LatentLayout::kTotal);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index b = 0; b < B; ++b)
    for (int i = 0; i < LatentLayout::kTotal; ++i) eps(b, i) = normal(rng);
  const Tensor z = nn::add(q.mean, nn::mul(q.sd, Tensor::constant(std::move(eps))));

  static const ColumnBounds ub = bounds_for(LatentLayout::kUOffset, LatentLayout::kU);
  static const ColumnBounds xb = bounds_for(LatentLayout::kX0Offset, LatentLayout::kX0);
  static const ColumnBounds wb = bounds_for(LatentLayout::kWOffset, LatentLayout::kW);
  Tensor u = nn::constrain_cols(nn::slice_cols(z, LatentLayout::kUOffset, LatentLayout::kU), ub.lo, ub.width);
  if (training) u = nn::dropout(u, cfg_.u_dropout, true, rng);
  const Tensor x0 = nn::constrain_cols(nn::slice_cols(z, LatentLayout::kX0Offset, LatentLayout::kX0), xb.lo, xb.width);
  const Tensor w = nn::constrain_cols(nn::slice_cols(z, LatentLayout::kWOffset, LatentLayout::kW), wb.lo, wb.width);

  ElboTerms terms;
  terms.glucose = nn::mech_decode(u, x0, w, cfg_.sim, &batch.ids);
  terms.recon = nn::gaussian_log_likelihood(batch.glucose, terms.glucose, sigma_tensor(), batch.glucose_mask);
  terms.kl = nn::kl_normal(q.mean, q.sd, as_row(cfg_.prior.mean), as_row(cfg_.prior.sd));
  const Matrix beta_eff = batch.glucose_mask.rowwise().sum() * (beta_hat / LatentLayout::kTotal);
  terms.elbo = nn::sub(terms.recon, nn::mul(terms.kl, Tensor::constant(beta_eff)));
  return terms;
}

ElboResult HybridModel::elbo(const PpgrRecord& record, std::uint64_t seed, double beta_hat, bool training) const {
  const int n_obs = record.observed_glucose();
  if (n_obs == 0) throw Error(ErrorKind::DegenerateRecord, "record " + record.ppgr_id + " has no observed glucose");
  const PpgrRecord* ptr = &record;
  const auto batch = make_encoder_batch(std::span<const PpgrRecord* const>(&ptr, 1), norm_);
  nn::Rng rng(seed);
  const auto q = encode(batch);
  const auto terms = elbo_terms(q, batch, beta_hat, training, rng);
  return {terms.elbo.item(), terms.recon.item(), terms.kl.item(), n_obs, beta_hat * n_obs / LatentLayout::kTotal};
}

std::array<double, LatentLayout::kTotal> constrain_latent(const std::array<double, LatentLayout::kTotal>& z) {
  std::array<double, LatentLayout::kTotal> c{};
  for (int i = 0; i < LatentLayout::kTotal; ++i) c[i] = constrain(z[i], LatentLayout::interval(i));
  return c;
}

MechEmbedding embedding_from_latent(const std::array<double, LatentLayout::kTotal>& z) {
  const auto c = constrain_latent(z);
  const int w = LatentLayout::kWOffset;
  double total_u = 0.0;
  for (int t = 0; t < LatentLayout::kU; ++t) total_u += c[LatentLayout::kUOffset + t] * kSampleMinutes;
  MechEmbedding e;
  e.values = {c[w + 0], c[w + 1], c[w + 2], c[w + 3], c[w + 4] * c[w + 5], c[LatentLayout::kX0Offset], total_u};
  return e;
}

MechEmbedding HybridModel::embed(const PpgrRecord& record) const {
  return embedding_from_latent(encode(record).mean);
}

std::array<double, kSeqLen> HybridModel::decode_mean(const std::array<double, LatentLayout::kTotal>& z) const {
  const auto c = constrain_latent(z);
  CarbRate u{};
  std::copy_n(c.begin() + LatentLayout::kUOffset, LatentLayout::kU, u.begin());
  const MechState x0{c[60], c[61], c[62], c[63]};
  const MechParams p{c[64], c[65], c[66], c[67], c[68], c[69]};
  return glucose_of(simulate(x0, p, u, cfg_.sim));
}

Reconstruction HybridModel::reconstruct(const PpgrRecord& record) const {
  const auto q = encode(record);
  Reconstruction r;
  r.glucose = decode_mean(q.mean);
  const auto c = constrain_latent(q.mean);
  std::copy_n(c.begin() + LatentLayout::kUOffset, LatentLayout::kU, r.u.begin());
  return r;
}

// --- training -------------------------------------------------------------------

void check_trainable(const Dataset& data, const TrainOptions& opts) {
  if (data.records.empty()) throw Error(ErrorKind::DegenerateInput, "cannot train on an empty dataset");
  if (opts.batch < 1 || opts.epochs < 0) throw Error(ErrorKind::InvalidConfig, "batch >= 1 and epochs >= 0 required");
  for (const auto& r : data.records) {
    if (r.observed_glucose() == 0) {
      throw Error(ErrorKind::DegenerateRecord, "record " + r.ppgr_id + " has no observed glucose");
    }
  }
}

TrainResult train(const Dataset& data, HybridModel& model, const TrainOptions& opts) {
  return train_amortized(data, model, opts);
}

// --- checkpoints ----------------------------------------------------------------

Checkpoint hybrid_checkpoint(const HybridModel& model, const nn::AdamState& adam, std::uint64_t seed) {
  KeyValueConfig kv;
  model.config().write(kv);
  return capture_checkpoint("hybrid", kv.to_text(), seed, model.parameters(), adam, model.normalizer().to_vector());
}

HybridModel hybrid_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "hybrid") throw Error(ErrorKind::InvalidConfig, "checkpoint holds a " + ckpt.kind + " model");
  const auto cfg = HybridConfig::read(KeyValueConfig::parse(ckpt.config_text));
  HybridModel model(cfg, InputNormalizer::from_vector(ckpt.normalizer), ckpt.seed);
  restore_parameters(model.parameters(), ckpt);
  return model;
}

}  // namespace glyco
