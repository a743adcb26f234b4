#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "glyco/checkpoint.hpp"
#include "glyco/datamodel.hpp"
#include "glyco/error.hpp"
#include "glyco/mechsim.hpp"
#include "glyco/nncore.hpp"
#include "glyco/transforms.hpp"

namespace glyco {

class KeyValueConfig;

// --- shared encoder front-end ---------------------------------------------------

inline constexpr int kDemographicWidth = 4;  // age, weight, sex one-hot (F, M)

/// Per-channel affine scaling of encoder inputs, fitted on the training set
/// and stored with the model.
struct InputNormalizer {
  double glucose_mean = 120.0;
  double glucose_sd = 40.0;
  std::array<double, kNumMealChannels> meal_scale{};
  double age_mean = 50.0;
  double age_sd = 10.0;
  double weight_mean = 80.0;
  double weight_sd = 15.0;

  InputNormalizer() { meal_scale.fill(1.0); }
  static InputNormalizer fit(const Dataset& data);
  std::vector<double> to_vector() const;
  static InputNormalizer from_vector(std::span<const double> v);
};

/// Encoder inputs for a batch of records, one entry per timestep. A group's
/// values are zeroed and its mask is 0 when any of its channels is missing.
struct EncoderBatch {
  std::vector<nn::Matrix> cgm;      // B x 1
  std::vector<nn::Matrix> meal;     // B x 6
  std::vector<nn::Matrix> demo;     // B x 4
  std::vector<nn::Matrix> cgm_mask; // B x 1
  std::vector<nn::Matrix> meal_mask;
  nn::Matrix glucose;               // B x 60 raw mg/dL (0 where missing)
  nn::Matrix glucose_mask;          // B x 60
  std::vector<std::string> ids;

  Eigen::Index size() const { return glucose.rows(); }
};

EncoderBatch make_encoder_batch(std::span<const PpgrRecord* const> records, const InputNormalizer& norm);

/// Per-group 8-dim timestep embedders feeding a recurrent encoder.
class ContextEncoder {
 public:
  ContextEncoder() = default;
  ContextEncoder(nn::ParameterStore& store, const std::string& name, const nn::RecurrentEncoderConfig& cfg,
                 int embed_dim, nn::Rng& rng);
  nn::RecurrentEncoding operator()(const EncoderBatch& batch) const;
  int output_dim() const { return encoder_.output_dim(); }

 private:
  nn::Dense cgm_;
  nn::Dense meal_;
  nn::Dense demo_;
  nn::RecurrentEncoder encoder_;
};

// --- hybrid model ---------------------------------------------------------------

struct HybridConfig {
  nn::RecurrentEncoderConfig encoder{2, 32, true, 24};
  int embed_dim = 8;
  double u_dropout = 0.5;
  double sigma_init = 5.0;  // mg/dL
  Interval sigma_range{1.0, 50.0};
  double u_mean_bias = -2.0;  // initial unconstrained carb-rate mean
  double sd_init = 0.1;       // initial posterior sd (unconstrained)
  SimConfig sim;
  ExpertPrior prior = default_prior();

  void write(KeyValueConfig& cfg) const;
  static HybridConfig read(const KeyValueConfig& cfg);
};

/// Factorized normal over the unconstrained latent (70 dims).
struct LatentPosterior {
  std::array<double, LatentLayout::kTotal> mean{};
  std::array<double, LatentLayout::kTotal> sd{};
};

/// Batched posterior as graph tensors (B x 70 each).
struct PosteriorTensors {
  nn::Tensor mean;
  nn::Tensor sd;
};

struct ElboTerms {
  nn::Tensor elbo;   // B x 1
  nn::Tensor recon;  // B x 1
  nn::Tensor kl;     // B x 1
  nn::Tensor glucose;  // B x 60 decoded mean
};

struct ElboResult {
  double elbo = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  int n_obs = 0;
  double beta_eff = 0.0;
};

/// (tau_m, G_b, S_G, p_2, S_I*M_I, G(0), total effective carbs in mg).
struct MechEmbedding {
  std::array<double, 7> values{};
  static constexpr std::array<const char*, 7> kNames{"tau_m", "G_b", "S_G", "p_2", "SI_MI", "G0", "total_u"};
};

struct Reconstruction {
  std::array<double, kSeqLen> glucose{};
  CarbRate u{};
};

class HybridModel {
 public:
  HybridModel(const HybridConfig& cfg, const InputNormalizer& norm, std::uint64_t seed);

  PosteriorTensors encode(const EncoderBatch& batch) const;
  LatentPosterior encode(const PpgrRecord& record) const;

  /// Reparameterized single-sample ELBO for every row of the batch.
  ElboTerms elbo_terms(const PosteriorTensors& q, const EncoderBatch& batch, double beta_hat, bool training,
                       nn::Rng& rng) const;
  ElboResult elbo(const PpgrRecord& record, std::uint64_t seed, double beta_hat, bool training) const;

  MechEmbedding embed(const PpgrRecord& record) const;
  Reconstruction reconstruct(const PpgrRecord& record) const;
  /// Decodes the constrained latent given by an unconstrained vector.
  std::array<double, kSeqLen> decode_mean(const std::array<double, LatentLayout::kTotal>& z) const;

  double sigma_obs() const;
  nn::Tensor sigma_tensor() const;

  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }
  const HybridConfig& config() const { return cfg_; }
  const InputNormalizer& normalizer() const { return norm_; }

 private:
  HybridConfig cfg_;
  InputNormalizer norm_;
  nn::ParameterStore store_;
  ContextEncoder context_;
  nn::Dense u_head_;
  nn::Dense x0_head_;
  nn::Dense w_head_;
  nn::Tensor sigma_raw_;
};

struct TrainOptions {
  int epochs = 100;
  int batch = 64;
  double lr = 0.01;
  double beta_hat = 0.01;
  std::uint64_t seed = 0;
};

struct EpochStats {
  int epoch = 0;
  double elbo = 0.0;   // mean per record
  double recon = 0.0;
  double kl = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> curve;
  nn::AdamState adam;
};

TrainResult train(const Dataset& data, HybridModel& model, const TrainOptions& opts);

/// Throws unless the dataset is nonempty, every record has glucose and the
/// options are usable.
void check_trainable(const Dataset& data, const TrainOptions& opts);

/// Minibatch ELBO ascent with ADAM for any amortized model exposing
/// encode(batch), elbo_terms(...), parameters() and normalizer().
template <class Model>
TrainResult train_amortized(const Dataset& data, Model& model, const TrainOptions& opts) {
  check_trainable(data, opts);
  TrainResult result;
  result.adam.lr = opts.lr;
  nn::Rng rng(opts.seed);
  std::vector<std::size_t> order(data.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto params = model.parameters().tensors();
  const auto bs = static_cast<std::size_t>(opts.batch);

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats stats;
    stats.epoch = epoch + 1;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<const PpgrRecord*> ptrs;
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) ptrs.push_back(&data.records[order[i]]);
      const auto batch = make_encoder_batch(ptrs, model.normalizer());

      model.parameters().zero_grad();
      const auto q = model.encode(batch);
      const auto terms = model.elbo_terms(q, batch, opts.beta_hat, true, rng);
      const nn::Tensor loss = nn::scale(nn::sum(terms.elbo), -1.0 / static_cast<double>(ptrs.size()));
      try {
        nn::backward(loss);
      } catch (const Error& e) {
        throw Error(e.kind(), "batch starting with record " + batch.ids.front() + ": " + e.what());
      }
      nn::adam_step(params, result.adam);
      stats.elbo += terms.elbo.value().sum();
      stats.recon += terms.recon.value().sum();
      stats.kl += terms.kl.value().sum();
    }
    const auto n = static_cast<double>(order.size());
    stats.elbo /= n;
    stats.recon /= n;
    stats.kl /= n;
    result.curve.push_back(stats);
  }
  return result;
}

/// Latent dims -> constrained values using the layout's intervals.
std::array<double, LatentLayout::kTotal> constrain_latent(const std::array<double, LatentLayout::kTotal>& z);
MechEmbedding embedding_from_latent(const std::array<double, LatentLayout::kTotal>& z);

Checkpoint hybrid_checkpoint(const HybridModel& model, const nn::AdamState& adam, std::uint64_t seed);
HybridModel hybrid_from_checkpoint(const Checkpoint& ckpt);

}  // namespace glyco
