#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "glyco/datamodel.hpp"
#include "glyco/transforms.hpp"

namespace glyco {

class KeyValueConfig;

/// ODE parameters, in latent order (tau_m, G_b, S_G, p_2, S_I, M_I).
struct MechParams {
  double tau_m = 30.0;  // min
  double G_b = 120.0;   // mg/dL
  double S_G = 1e-2;    // 1/min
  double p_2 = 1.0 / 30.0;
  double S_I = 5e-4;    // (L/mU)/min
  double M_I = 1.0;     // (mU/L)/(mg/dL)

  std::array<double, 6> to_array() const { return {tau_m, G_b, S_G, p_2, S_I, M_I}; }
  static MechParams from_array(std::span<const double, 6> v) { return {v[0], v[1], v[2], v[3], v[4], v[5]}; }
  bool in_range() const;
};

struct MechState {
  double G = 0.0;   // plasma glucose, mg/dL
  double X = 0.0;   // insulin action, 1/min
  double G1 = 0.0;  // gut compartment 1, mg/dL
  double G2 = 0.0;  // gut compartment 2, mg/dL

  std::array<double, 4> to_array() const { return {G, X, G1, G2}; }
  static MechState from_array(std::span<const double, 4> v) { return {v[0], v[1], v[2], v[3]}; }
  bool in_range() const;
};

/// Carb intake rate u_G (mg/min) at each 5-minute grid point, held constant
/// over the following interval.
using CarbRate = std::array<double, kSeqLen>;

struct SimConfig {
  double dt_obs = kSampleMinutes;
  int substeps = 5;
  double V_G = 100.0;  // dL

  double dt() const { return dt_obs / substeps; }
};

inline constexpr double kBlowupThreshold = 1e6;

MechState derivatives(const MechState& s, const MechParams& p, double u_t, double V_G);

using Trajectory = std::array<MechState, kSeqLen>;

/// Explicit Euler; output[i] is the state at observation i, output[0] = x0.
/// States are clamped at zero after every step.
Trajectory simulate(const MechState& x0, const MechParams& p, const CarbRate& u, const SimConfig& cfg);

std::array<double, kSeqLen> glucose_of(const Trajectory& traj);

struct SimGradient {
  std::array<double, 4> x0{};
  std::array<double, 6> params{};
  CarbRate u{};
};

/// Reverse-mode pass through the Euler scheme: given dL/dG at each
/// observation, returns dL/d(x0, params, u). Also returns the forward glucose.
SimGradient simulate_vjp(const MechState& x0, const MechParams& p, const CarbRate& u, const SimConfig& cfg,
                         std::span<const double, kSeqLen> d_glucose,
                         std::array<double, kSeqLen>* glucose_out = nullptr);

/// Logged grams of carbs per timestep to a carb rate: each entry becomes a
/// 15-minute constant pulse of grams*1000/15 mg/min, summed and clamped to
/// the carb-rate bound.
CarbRate carbs_to_rate(std::span<const double, kSeqLen> grams);

/// Carbs channel of a record's meal log (missing -> 0).
std::array<double, kSeqLen> logged_carbs(const PpgrRecord& record);

// --- synthetic cohorts -----------------------------------------------------

struct NormalSpec {
  double mean = 0.0;
  double sd = 0.0;
};

struct GroupSpec {
  std::string name;
  Diagnosis diagnosis = Diagnosis::Prediabetes;
  int persons = 10;
  int records_per_person = 10;
  std::array<NormalSpec, 6> params;  // latent order
  NormalSpec age{55.0, 10.0};
  NormalSpec weight{85.0, 15.0};
};

struct CohortSpec {
  std::vector<GroupSpec> groups;
  double record_param_jitter = 0.05;  // relative sd of per-record deviation from the person's parameters
  double noise_sd = 5.0;              // mg/dL
  int meals_min = 1;
  int meals_max = 3;
  double carbs_min = 5.0;   // grams per meal
  double carbs_max = 15.0;
  int extra_meal_first = 24;  // window for meals after the anchoring one
  int extra_meal_last = 48;
  double g0_offset_sd = 5.0;  // G(0) - G_b
  double x0_max = 0.005;
  double g1_max = 1.0;
  double g2_max = 5.0;
  double jitter_prob = 1.0;
  double jitter_min_minutes = -30.0;
  double jitter_max_minutes = 30.0;
  double rescale_prob = 1.0;
  double carb_scale_min = 0.5;
  double carb_scale_max = 2.0;
  double delete_prob = 0.2;
  double glucose_missing_prob = 0.0;
  double channel_missing_prob = 0.0;
  SimConfig sim;
  std::uint64_t seed = 0;

  /// Two groups (prediabetes, t2d) with separated parameter distributions.
  static CohortSpec default_spec();
  static CohortSpec from_config(const KeyValueConfig& cfg);
  void write(KeyValueConfig& cfg) const;
  /// Turns off every log corruption, missingness and observation noise.
  void disable_corruption();
  void validate() const;
};

struct GroundTruth {
  std::string ppgr_id;
  std::string person_id;
  std::string group;
  MechParams params;
  MechState x0;
  CarbRate u{};
  std::vector<int> meal_times;  // true meal timesteps
};

struct Cohort {
  Dataset data;
  std::vector<GroundTruth> truth;  // aligned with data.records
};

Cohort generate_cohort(const CohortSpec& spec, std::uint64_t seed);

void write_ground_truth_csv(std::ostream& out, const std::vector<GroundTruth>& truth, const Provenance& prov);
std::vector<GroundTruth> read_ground_truth_csv(std::istream& in);

}  // namespace glyco
