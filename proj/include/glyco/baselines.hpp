#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "glyco/checkpoint.hpp"
#include "glyco/datamodel.hpp"
#include "glyco/hybridvae.hpp"
#include "glyco/mechsim.hpp"
#include "glyco/nncore.hpp"

namespace glyco {

class KeyValueConfig;

// --- black-box VAE --------------------------------------------------------------

struct BlackBoxConfig {
  nn::RecurrentEncoderConfig encoder{2, 32, true, 24};
  int embed_dim = 8;
  int latent = 32;
  int decoder_hidden = 32;
  double sigma_init = 5.0;
  Interval sigma_range{1.0, 50.0};
  double sd_init = 0.1;

  void write(KeyValueConfig& cfg) const;
  static BlackBoxConfig read(const KeyValueConfig& cfg);
};

/// Decoder inputs per timestep: scaled meal channels, meal mask bit, demographics.
inline constexpr int kDecoderContextWidth = kNumMealChannels + 1 + kDemographicWidth;

class BlackBoxModel {
 public:
  BlackBoxModel(const BlackBoxConfig& cfg, const InputNormalizer& norm, std::uint64_t seed);

  PosteriorTensors encode(const EncoderBatch& batch) const;
  /// Decoded glucose (B x 60) for latent rows z (B x latent).
  nn::Tensor decode(const nn::Tensor& z, const EncoderBatch& batch) const;
  ElboTerms elbo_terms(const PosteriorTensors& q, const EncoderBatch& batch, double beta_hat, bool training,
                       nn::Rng& rng) const;

  std::vector<double> embed(const PpgrRecord& record) const;
  std::array<double, kSeqLen> reconstruct(const PpgrRecord& record) const;
  double sigma_obs() const;

  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }
  const BlackBoxConfig& config() const { return cfg_; }
  const InputNormalizer& normalizer() const { return norm_; }

 private:
  nn::Tensor sigma_tensor() const;

  BlackBoxConfig cfg_;
  InputNormalizer norm_;
  nn::ParameterStore store_;
  ContextEncoder context_;
  nn::Dense head_;
  nn::Dense init_hidden_;
  nn::LstmCell decoder_;
  nn::Dense readout_;
  nn::Tensor sigma_raw_;
};

TrainResult train_blackbox(const Dataset& data, BlackBoxModel& model, const TrainOptions& opts);

Checkpoint blackbox_checkpoint(const BlackBoxModel& model, const nn::AdamState& adam, std::uint64_t seed);
BlackBoxModel blackbox_from_checkpoint(const Checkpoint& ckpt);

// --- per-record mechanistic fit -------------------------------------------------

struct MechFitOptions {
  int steps = 2000;
  double lr = 0.01;
  std::uint64_t seed = 0;
  SimConfig sim;
};

struct MechFitResult {
  MechParams params;
  MechState x0;
  double mse = 0.0;
  double initial_mse = 0.0;
  int iterations = 0;
  /// Same layout as MechEmbedding, last entry = total logged carbs in mg.
  std::array<double, 7> embedding{};
};

/// ADAM on unconstrained (w', x0') against the observed glucose, with the
/// carb rate held fixed. Returns the best iterate.
MechFitResult fit_mechanistic(const PpgrRecord& record, const CarbRate& u, const MechFitOptions& opts);
/// Uses the record's logged carbs converted to pulses.
MechFitResult fit_mechanistic(const PpgrRecord& record, const MechFitOptions& opts);

// --- time-contrastive learning --------------------------------------------------

struct TclConfig {
  int hidden = 32;
  int windows = 3;
  int epochs = 500;
  double lr = 0.01;
  int batch = 64;  // records per step

  void write(KeyValueConfig& cfg) const;
  static TclConfig read(const KeyValueConfig& cfg);
};

/// Per-timestep TCL input: scaled glucose, 6 meal channels, 7 presence bits.
inline constexpr int kTclInputWidth = 1 + kNumMealChannels + 1 + kNumMealChannels;

enum class TclMode { Average, Concat };

class TclModel {
 public:
  TclModel(const TclConfig& cfg, const InputNormalizer& norm, std::uint64_t seed);

  /// Inputs for every timestep of the given records, stacked (60*B x 14).
  nn::Matrix inputs(std::span<const PpgrRecord* const> records) const;
  nn::Tensor features(const nn::Tensor& x) const;  // final pre-activation layer
  nn::Tensor logits(const nn::Tensor& x) const;
  int window_of(int t) const { return t * cfg_.windows / kSeqLen; }

  std::vector<double> embed(const PpgrRecord& record, TclMode mode) const;
  /// Fraction of timesteps whose window is predicted correctly.
  double window_accuracy(const Dataset& data) const;

  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }
  const TclConfig& config() const { return cfg_; }
  const InputNormalizer& normalizer() const { return norm_; }

 private:
  TclConfig cfg_;
  InputNormalizer norm_;
  nn::ParameterStore store_;
  nn::Dense l1_, l2_, out_;
};

struct TclTrainResult {
  std::vector<double> loss;  // mean cross-entropy per epoch
  nn::AdamState adam;
};

TclTrainResult train_tcl(const Dataset& data, TclModel& model, std::uint64_t seed);

Checkpoint tcl_checkpoint(const TclModel& model, const nn::AdamState& adam, std::uint64_t seed);
TclModel tcl_from_checkpoint(const Checkpoint& ckpt);

// --- raw CGM and DTW ------------------------------------------------------------

/// Interpolated glucose; throws AllMissing without readings.
std::vector<double> raw_embedding(const PpgrRecord& record);

/// Squared-cost DTW with unconstrained window.
double dtw_distance(std::span<const double> a, std::span<const double> b);
/// Optimal warping path as (i, j) pairs from (0,0) to (n-1, m-1).
std::vector<std::pair<int, int>> dtw_path(std::span<const double> a, std::span<const double> b);

/// DTW barycenter averaging starting from `init`.
std::vector<double> dba(const std::vector<std::vector<double>>& series, std::vector<double> init, int iterations = 10);

struct DtwKMeansResult {
  std::vector<int> labels;
  double inertia = 0.0;
  std::vector<std::vector<double>> centers;
};

/// k-means under DTW with DBA centroid updates; k-means++ seeding, best of n_init.
DtwKMeansResult dtw_kmeans(const std::vector<std::vector<double>>& series, int k, int n_init, std::uint64_t seed,
                           int max_iter = 20);

}  // namespace glyco
