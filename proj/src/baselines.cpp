#include "glyco/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "glyco/error.hpp"
#include "glyco/parallel.hpp"
#include "glyco/textio.hpp"

namespace glyco {

using nn::Matrix;
using nn::Tensor;

namespace {

double inverse_softplus(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

constexpr double kSdFloor = 1e-5;

Tensor bounded_scalar(const Tensor& raw, Interval range) {
  Eigen::RowVectorXd lo(1), width(1);
  lo << range.lo;
  width << range.width();
  return nn::constrain_cols(raw, lo, width);
}

}  // namespace

// --- black-box VAE --------------------------------------------------------------

void BlackBoxConfig::write(KeyValueConfig& cfg) const {
  cfg.set("blackbox.layers", std::to_string(encoder.layers));
  cfg.set("blackbox.hidden", std::to_string(encoder.hidden));
  cfg.set("blackbox.bidirectional", encoder.bidirectional ? "true" : "false");
  cfg.set("blackbox.embed_dim", std::to_string(embed_dim));
  cfg.set("blackbox.latent", std::to_string(latent));
  cfg.set("blackbox.decoder_hidden", std::to_string(decoder_hidden));
  cfg.set("blackbox.sigma_init", format_real(sigma_init));
  cfg.set("blackbox.sd_init", format_real(sd_init));
}

BlackBoxConfig BlackBoxConfig::read(const KeyValueConfig& cfg) {
  BlackBoxConfig b;
  b.encoder.layers = static_cast<int>(cfg.get_int("blackbox.layers", b.encoder.layers));
  b.encoder.hidden = static_cast<int>(cfg.get_int("blackbox.hidden", b.encoder.hidden));
  b.encoder.bidirectional = cfg.get_bool("blackbox.bidirectional", b.encoder.bidirectional);
  b.embed_dim = static_cast<int>(cfg.get_int("blackbox.embed_dim", b.embed_dim));
  b.latent = static_cast<int>(cfg.get_int("blackbox.latent", b.latent));
  b.decoder_hidden = static_cast<int>(cfg.get_int("blackbox.decoder_hidden", b.decoder_hidden));
  b.sigma_init = cfg.get_real("blackbox.sigma_init", b.sigma_init);
  b.sd_init = cfg.get_real("blackbox.sd_init", b.sd_init);
  if (b.encoder.layers < 1 || b.encoder.hidden < 1 || b.embed_dim < 1 || b.latent < 1 || b.decoder_hidden < 1 ||
      !(b.sd_init > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "invalid black-box model settings");
  }
  return b;
}

BlackBoxModel::BlackBoxModel(const BlackBoxConfig& cfg, const InputNormalizer& norm, std::uint64_t seed)
    : cfg_(cfg), norm_(norm) {
  nn::Rng rng(seed);
  context_ = ContextEncoder(store_, "encoder", cfg.encoder, cfg.embed_dim, rng);
  head_ = nn::Dense(store_, "head_z", context_.output_dim(), 2 * cfg.latent, rng);
  head_.weight.mutable_value() *= 0.1;
  for (int i = 0; i < cfg.latent; ++i) head_.bias.mutable_value()(0, cfg.latent + i) = inverse_softplus(cfg.sd_init);
  init_hidden_ = nn::Dense(store_, "decoder_init", cfg.latent, cfg.decoder_hidden, rng);
  decoder_ = nn::LstmCell(store_, "decoder", kDecoderContextWidth, cfg.decoder_hidden, rng);
  readout_ = nn::Dense(store_, "readout", cfg.decoder_hidden, 1, rng);
  sigma_raw_ = store_.create("sigma_obs_raw", Matrix::Constant(1, 1, unconstrain(cfg.sigma_init, cfg.sigma_range)));
}

Tensor BlackBoxModel::sigma_tensor() const { return bounded_scalar(sigma_raw_, cfg_.sigma_range); }

double BlackBoxModel::sigma_obs() const { return constrain(sigma_raw_.item(), cfg_.sigma_range); }

PosteriorTensors BlackBoxModel::encode(const EncoderBatch& batch) const {
  const Tensor out = head_(context_(batch).summary);
  const Tensor sd = nn::add_scalar(nn::softplus(nn::slice_cols(out, cfg_.latent, cfg_.latent)), kSdFloor);
  return {nn::slice_cols(out, 0, cfg_.latent), sd};
}

Tensor BlackBoxModel::decode(const Tensor& z, const EncoderBatch& batch) const {
  nn::LstmCell::State state{init_hidden_(z), Tensor::constant(Matrix::Zero(z.rows(), cfg_.decoder_hidden))};
  std::vector<Tensor> ys;
  ys.reserve(kSeqLen);
  for (int t = 0; t < kSeqLen; ++t) {
    Matrix x(batch.size(), kDecoderContextWidth);
    x << batch.meal[t], batch.meal_mask[t], batch.demo[t];
    state = decoder_.step(Tensor::constant(std::move(x)), state);
    ys.push_back(readout_(state.h));
  }
  return nn::add_scalar(nn::scale(nn::concat_cols(ys), norm_.glucose_sd), norm_.glucose_mean);
}

ElboTerms BlackBoxModel::elbo_terms(const PosteriorTensors& q, const EncoderBatch& batch, double beta_hat, bool,
                                    nn::Rng& rng) const {
  const Eigen::Index B = batch.size();
  Matrix eps(B, cfg_.latent);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index b = 0; b < B; ++b)
    for (int i = 0; i < cfg_.latent; ++i) eps(b, i) = normal(rng);
  const Tensor z = nn::add(q.mean, nn::mul(q.sd, Tensor::constant(std::move(eps))));
  ElboTerms terms;
  terms.glucose = decode(z, batch);
  terms.recon = nn::gaussian_log_likelihood(batch.glucose, terms.glucose, sigma_tensor(), batch.glucose_mask);
  terms.kl = nn::kl_normal(q.mean, q.sd, Eigen::RowVectorXd::Zero(cfg_.latent), Eigen::RowVectorXd::Ones(cfg_.latent));
  const Matrix beta_eff = batch.glucose_mask.rowwise().sum() * (beta_hat / cfg_.latent);
  terms.elbo = nn::sub(terms.recon, nn::mul(terms.kl, Tensor::constant(beta_eff)));
  return terms;
}

std::vector<double> BlackBoxModel::embed(const PpgrRecord& record) const {
  const PpgrRecord* ptr = &record;
  const auto q = encode(make_encoder_batch(std::span<const PpgrRecord* const>(&ptr, 1), norm_));
  const Matrix& m = q.mean.value();
  return std::vector<double>(m.data(), m.data() + m.size());
}

std::array<double, kSeqLen> BlackBoxModel::reconstruct(const PpgrRecord& record) const {
  const PpgrRecord* ptr = &record;
  const auto batch = make_encoder_batch(std::span<const PpgrRecord* const>(&ptr, 1), norm_);
  const Matrix g = decode(encode(batch).mean, batch).value();
  std::array<double, kSeqLen> out{};
  for (int t = 0; t < kSeqLen; ++t) out[t] = g(0, t);
  return out;
}

TrainResult train_blackbox(const Dataset& data, BlackBoxModel& model, const TrainOptions& opts) {
  return train_amortized(data, model, opts);
}

Checkpoint blackbox_checkpoint(const BlackBoxModel& model, const nn::AdamState& adam, std::uint64_t seed) {
  KeyValueConfig kv;
  model.config().write(kv);
  return capture_checkpoint("blackbox", kv.to_text(), seed, model.parameters(), adam, model.normalizer().to_vector());
}

BlackBoxModel blackbox_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "blackbox") throw Error(ErrorKind::InvalidConfig, "checkpoint holds a " + ckpt.kind + " model");
  BlackBoxModel model(BlackBoxConfig::read(KeyValueConfig::parse(ckpt.config_text)),
                      InputNormalizer::from_vector(ckpt.normalizer), ckpt.seed);
  restore_parameters(model.parameters(), ckpt);
  return model;
}

// --- per-record mechanistic fit -------------------------------------------------

namespace {

constexpr int kFitDims = LatentLayout::kW + LatentLayout::kX0;

struct FitTarget {
  std::array<double, kSeqLen> obs{};
  std::array<bool, kSeqLen> seen{};
  int n = 0;
};

Interval fit_interval(int i) {
  return i < LatentLayout::kW ? LatentLayout::w_intervals()[i] : LatentLayout::x0_intervals()[i - LatentLayout::kW];
}

void unpack(const std::array<double, kFitDims>& theta, MechParams& p, MechState& x0) {
  std::array<double, kFitDims> c{};
  for (int i = 0; i < kFitDims; ++i) c[i] = constrain(theta[i], fit_interval(i));
  p = MechParams::from_array(std::span<const double, 6>(c.data(), 6));
  x0 = MechState::from_array(std::span<const double, 4>(c.data() + 6, 4));
}

double fit_loss(const std::array<double, kFitDims>& theta, const CarbRate& u, const FitTarget& target,
                const SimConfig& sim, std::array<double, kFitDims>* grad) {
  MechParams p;
  MechState x0;
  unpack(theta, p, x0);
  const auto g = glucose_of(simulate(x0, p, u, sim));
  std::array<double, kSeqLen> d{};
  double mse = 0.0;
  for (int t = 0; t < kSeqLen; ++t) {
    if (!target.seen[t]) continue;
    const double r = g[t] - target.obs[t];
    mse += r * r;
    d[t] = 2.0 * r / target.n;
  }
  mse /= target.n;
  if (grad) {
    const auto sg = simulate_vjp(x0, p, u, sim, d);
    for (int i = 0; i < kFitDims; ++i) {
      const double dc = i < LatentLayout::kW ? sg.params[i] : sg.x0[i - LatentLayout::kW];
      (*grad)[i] = dc * constrain_derivative(theta[i], fit_interval(i));
    }
  }
  return mse;
}

}  // namespace

MechFitResult fit_mechanistic(const PpgrRecord& record, const CarbRate& u, const MechFitOptions& opts) {
  FitTarget target;
  for (int t = 0; t < kSeqLen; ++t) {
    if (record.glucose[t]) {
      target.obs[t] = *record.glucose[t];
      target.seen[t] = true;
      ++target.n;
    }
  }
  if (target.n < 10) {
    throw Error(ErrorKind::DegenerateRecord, "record " + record.ppgr_id + " has fewer than 10 glucose readings");
  }
  const auto first = std::find_if(record.glucose.begin(), record.glucose.end(),
                                  [](const OptReal& v) { return v.has_value(); });
  const double g0 = **first;

  std::array<double, kFitDims> theta{};
  const ExpertPrior prior = default_prior();
  for (int i = 0; i < LatentLayout::kW; ++i) theta[i] = prior.mean[LatentLayout::kWOffset + i];
  const std::array<double, 4> x0_init{std::clamp(g0, bounds::kG0.lo + 1.0, bounds::kG0.hi - 1.0), 1e-3, 1e-3, 0.1};
  for (int i = 0; i < LatentLayout::kX0; ++i) theta[LatentLayout::kW + i] = unconstrain(x0_init[i], fit_interval(LatentLayout::kW + i));

  std::array<double, kFitDims> best = theta, m{}, v{}, grad{};
  MechFitResult result;
  result.initial_mse = fit_loss(theta, u, target, opts.sim, nullptr);
  double best_mse = result.initial_mse;
  double lr = opts.lr;
  long long step = 0;
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int it = 0; it < opts.steps; ++it) {
    double mse;
    try {
      mse = fit_loss(theta, u, target, opts.sim, &grad);
    } catch (const Error&) {
      // Step landed in a region the integrator cannot handle: back off.
      theta = best;
      m.fill(0.0);
      v.fill(0.0);
      step = 0;
      lr *= 0.5;
      continue;
    }
    if (mse < best_mse) {
      best_mse = mse;
      best = theta;
    }
    ++step;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
    for (int i = 0; i < kFitDims; ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
      v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
      theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
  try {
    const double mse = fit_loss(theta, u, target, opts.sim, nullptr);
    if (mse < best_mse) {
      best_mse = mse;
      best = theta;
    }
  } catch (const Error&) {
  }
  unpack(best, result.params, result.x0);
  result.mse = best_mse;
  result.iterations = opts.steps;
  double total = 0.0;
  for (double r : u) total += r * kSampleMinutes;
  const auto& p = result.params;
  result.embedding = {p.tau_m, p.G_b, p.S_G, p.p_2, p.S_I * p.M_I, result.x0.G, total};
  return result;
}

MechFitResult fit_mechanistic(const PpgrRecord& record, const MechFitOptions& opts) {
  const auto grams = logged_carbs(record);
  return fit_mechanistic(record, carbs_to_rate(std::span<const double, kSeqLen>(grams)), opts);
}

// --- time-contrastive learning --------------------------------------------------

void TclConfig::write(KeyValueConfig& cfg) const {
  cfg.set("tcl.hidden", std::to_string(hidden));
  cfg.set("tcl.windows", std::to_string(windows));
  cfg.set("tcl.epochs", std::to_string(epochs));
  cfg.set("tcl.lr", format_real(lr));
  cfg.set("tcl.batch", std::to_string(batch));
}

TclConfig TclConfig::read(const KeyValueConfig& cfg) {
  TclConfig c;
  c.hidden = static_cast<int>(cfg.get_int("tcl.hidden", c.hidden));
  c.windows = static_cast<int>(cfg.get_int("tcl.windows", c.windows));
  c.epochs = static_cast<int>(cfg.get_int("tcl.epochs", c.epochs));
  c.lr = cfg.get_real("tcl.lr", c.lr);
  c.batch = static_cast<int>(cfg.get_int("tcl.batch", c.batch));
  if (c.hidden < 1 || c.windows < 2 || c.windows > kSeqLen || c.epochs < 0 || !(c.lr > 0.0) || c.batch < 1) {
    throw Error(ErrorKind::InvalidConfig, "invalid TCL settings");
  }
  return c;
}

TclModel::TclModel(const TclConfig& cfg, const InputNormalizer& norm, std::uint64_t seed) : cfg_(cfg), norm_(norm) {
  nn::Rng rng(seed);
  l1_ = nn::Dense(store_, "tcl.l1", kTclInputWidth, cfg.hidden, rng);
  l2_ = nn::Dense(store_, "tcl.l2", cfg.hidden, cfg.hidden, rng);
  out_ = nn::Dense(store_, "tcl.out", cfg.hidden, cfg.windows, rng);
}

Matrix TclModel::inputs(std::span<const PpgrRecord* const> records) const {
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(records.size()) * kSeqLen, kTclInputWidth);
  for (std::size_t b = 0; b < records.size(); ++b) {
    const PpgrRecord& r = *records[b];
    for (int t = 0; t < kSeqLen; ++t) {
      const auto row = static_cast<Eigen::Index>(b) * kSeqLen + t;
      if (r.glucose[t]) {
        x(row, 0) = (*r.glucose[t] - norm_.glucose_mean) / norm_.glucose_sd;
        x(row, 1 + kNumMealChannels) = 1.0;
      }
      for (int c = 0; c < kNumMealChannels; ++c) {
        if (r.meals[t][c]) {
          x(row, 1 + c) = *r.meals[t][c] / norm_.meal_scale[c];
          x(row, 2 + kNumMealChannels + c) = 1.0;
        }
      }
    }
  }
  return x;
}

Tensor TclModel::features(const Tensor& x) const { return l2_(nn::tanh(l1_(x))); }

Tensor TclModel::logits(const Tensor& x) const { return out_(nn::tanh(features(x))); }

std::vector<double> TclModel::embed(const PpgrRecord& record, TclMode mode) const {
  const PpgrRecord* ptr = &record;
  const Matrix f = features(Tensor::constant(inputs(std::span<const PpgrRecord* const>(&ptr, 1)))).value();
  Matrix windows = Matrix::Zero(cfg_.windows, cfg_.hidden);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(cfg_.windows);
  for (int t = 0; t < kSeqLen; ++t) {
    windows.row(window_of(t)) += f.row(t);
    counts[window_of(t)] += 1.0;
  }
  for (int w = 0; w < cfg_.windows; ++w) windows.row(w) /= counts[w];
  std::vector<double> out;
  if (mode == TclMode::Average) {
    const Eigen::RowVectorXd avg = windows.colwise().mean();
    out.assign(avg.data(), avg.data() + avg.size());
  } else {
    for (int w = 0; w < cfg_.windows; ++w)
      for (int j = 0; j < cfg_.hidden; ++j) out.push_back(windows(w, j));
  }
  return out;
}

double TclModel::window_accuracy(const Dataset& data) const {
  if (data.records.empty()) return 0.0;
  std::vector<const PpgrRecord*> ptrs;
  for (const auto& r : data.records) ptrs.push_back(&r);
  const Matrix lg = logits(Tensor::constant(inputs(ptrs))).value();
  long long hits = 0;
  for (Eigen::Index row = 0; row < lg.rows(); ++row) {
    Eigen::Index best;
    lg.row(row).maxCoeff(&best);
    hits += best == window_of(static_cast<int>(row % kSeqLen));
  }
  return static_cast<double>(hits) / static_cast<double>(lg.rows());
}

TclTrainResult train_tcl(const Dataset& data, TclModel& model, std::uint64_t seed) {
  if (data.records.empty()) throw Error(ErrorKind::DegenerateInput, "cannot train on an empty dataset");
  const TclConfig& cfg = model.config();
  TclTrainResult result;
  result.adam.lr = cfg.lr;
  nn::Rng rng(seed);
  std::vector<std::size_t> order(data.records.size());
  std::iota(order.begin(), order.end(), 0);
  const auto params = model.parameters().tensors();
  const auto bs = static_cast<std::size_t>(cfg.batch);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<const PpgrRecord*> ptrs;
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) ptrs.push_back(&data.records[order[i]]);
      std::vector<int> labels(ptrs.size() * kSeqLen);
      for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = model.window_of(static_cast<int>(i % kSeqLen));
      model.parameters().zero_grad();
      const Tensor loss = nn::softmax_cross_entropy(model.logits(Tensor::constant(model.inputs(ptrs))), labels);
      nn::backward(loss);
      nn::adam_step(params, result.adam);
      total += loss.item() * static_cast<double>(ptrs.size());
    }
    result.loss.push_back(total / static_cast<double>(order.size()));
  }
  return result;
}

Checkpoint tcl_checkpoint(const TclModel& model, const nn::AdamState& adam, std::uint64_t seed) {
  KeyValueConfig kv;
  model.config().write(kv);
  return capture_checkpoint("tcl", kv.to_text(), seed, model.parameters(), adam, model.normalizer().to_vector());
}

TclModel tcl_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "tcl") throw Error(ErrorKind::InvalidConfig, "checkpoint holds a " + ckpt.kind + " model");
  TclModel model(TclConfig::read(KeyValueConfig::parse(ckpt.config_text)),
                 InputNormalizer::from_vector(ckpt.normalizer), ckpt.seed);
  restore_parameters(model.parameters(), ckpt);
  return model;
}

// --- raw CGM and DTW ------------------------------------------------------------

std::vector<double> raw_embedding(const PpgrRecord& record) {
  const auto g = record.interpolated_glucose();
  return std::vector<double>(g.begin(), g.end());
}

namespace {

Matrix dtw_table(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorKind::DegenerateInput, "DTW needs nonempty sequences");
  const auto n = static_cast<Eigen::Index>(a.size());
  const auto m = static_cast<Eigen::Index>(b.size());
  Matrix D = Matrix::Constant(n + 1, m + 1, std::numeric_limits<double>::infinity());
  D(0, 0) = 0.0;
  for (Eigen::Index i = 1; i <= n; ++i) {
    for (Eigen::Index j = 1; j <= m; ++j) {
      const double c = (a[i - 1] - b[j - 1]) * (a[i - 1] - b[j - 1]);
      D(i, j) = c + std::min({D(i - 1, j - 1), D(i - 1, j), D(i, j - 1)});
    }
  }
  return D;
}

}  // namespace

double dtw_distance(std::span<const double> a, std::span<const double> b) {
  const Matrix D = dtw_table(a, b);
  return D(D.rows() - 1, D.cols() - 1);
}

std::vector<std::pair<int, int>> dtw_path(std::span<const double> a, std::span<const double> b) {
  const Matrix D = dtw_table(a, b);
  auto i = D.rows() - 1, j = D.cols() - 1;
  std::vector<std::pair<int, int>> path;
  while (i > 0 && j > 0) {
    path.emplace_back(static_cast<int>(i - 1), static_cast<int>(j - 1));
    const double diag = D(i - 1, j - 1), up = D(i - 1, j), left = D(i, j - 1);
    if (diag <= up && diag <= left) {
      --i;
      --j;
    } else if (up <= left) {
      --i;
    } else {
      --j;
    }
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<double> dba(const std::vector<std::vector<double>>& series, std::vector<double> init, int iterations) {
  if (series.empty()) return init;
  for (int it = 0; it < iterations; ++it) {
    std::vector<double> sum(init.size(), 0.0), count(init.size(), 0.0);
    for (const auto& s : series) {
      for (const auto& [ci, si] : dtw_path(init, s)) {
        sum[static_cast<std::size_t>(ci)] += s[static_cast<std::size_t>(si)];
        count[static_cast<std::size_t>(ci)] += 1.0;
      }
    }
    for (std::size_t i = 0; i < init.size(); ++i) init[i] = sum[i] / count[i];
  }
  return init;
}

namespace {

DtwKMeansResult dtw_kmeans_once(const std::vector<std::vector<double>>& series, int k, std::uint64_t seed,
                                int max_iter) {
  const std::size_t n = series.size();
  nn::Rng rng(seed);
  std::vector<std::vector<double>> centers;
  centers.push_back(series[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], dtw_distance(series[i], centers.back()));
      total += nearest[i];
    }
    std::size_t pick = n - 1;
    const double r = std::uniform_real_distribution<double>(0.0, total)(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += nearest[i];
      if (r < acc) {
        pick = i;
        break;
      }
    }
    centers.push_back(series[pick]);
  }

  DtwKMeansResult res;
  res.labels.assign(n, -1);
  std::vector<double> dist(n, 0.0);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = dtw_distance(series[i], centers[static_cast<std::size_t>(c)]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      changed = changed || res.labels[i] != best;
      res.labels[i] = best;
      dist[i] = bd;
    }
    for (int c = 0; c < k; ++c) {
      if (std::find(res.labels.begin(), res.labels.end(), c) == res.labels.end()) {
        const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        res.labels[far] = c;
        dist[far] = 0.0;
        changed = true;
      }
    }
    if (!changed && it > 0) break;
    for (int c = 0; c < k; ++c) {
      std::vector<std::vector<double>> members;
      for (std::size_t i = 0; i < n; ++i)
        if (res.labels[i] == c) members.push_back(series[i]);
      centers[static_cast<std::size_t>(c)] = dba(members, centers[static_cast<std::size_t>(c)]);
    }
  }
  res.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) res.inertia += dtw_distance(series[i], centers[static_cast<std::size_t>(res.labels[i])]);
  res.centers = std::move(centers);
  return res;
}

}  // namespace

DtwKMeansResult dtw_kmeans(const std::vector<std::vector<double>>& series, int k, int n_init, std::uint64_t seed,
                           int max_iter) {
  if (k < 1 || n_init < 1) throw Error(ErrorKind::InvalidConfig, "k and n_init must be positive");
  std::vector<std::vector<double>> distinct;
  for (const auto& s : series)
    if (std::find(distinct.begin(), distinct.end(), s) == distinct.end()) distinct.push_back(s);
  if (static_cast<int>(distinct.size()) < k) {
    throw Error(ErrorKind::DegenerateInput, "DTW k-means needs at least k distinct series");
  }
  std::vector<DtwKMeansResult> runs(static_cast<std::size_t>(n_init));
  parallel_for(runs.size(), [&](std::size_t r) { runs[r] = dtw_kmeans_once(series, k, derive_seed(seed, r), max_iter); });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].inertia < runs[best].inertia) best = r;
  DtwKMeansResult out = std::move(runs[best]);
  // Name clusters by order of first appearance.
  std::vector<int> rename(static_cast<std::size_t>(k), -1);
  int next = 0;
  for (int& l : out.labels) {
    if (rename[static_cast<std::size_t>(l)] < 0) rename[static_cast<std::size_t>(l)] = next++;
    l = rename[static_cast<std::size_t>(l)];
  }
  std::vector<std::vector<double>> centers(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    const int to = rename[static_cast<std::size_t>(c)] >= 0 ? rename[static_cast<std::size_t>(c)] : next++;
    centers[static_cast<std::size_t>(to)] = std::move(out.centers[static_cast<std::size_t>(c)]);
  }
  out.centers = std::move(centers);
  return out;
}

}  // namespace glyco
