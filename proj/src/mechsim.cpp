#include "glyco/mechsim.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "glyco/error.hpp"
#include "glyco/parallel.hpp"
#include "glyco/textio.hpp"

namespace glyco {

bool MechParams::in_range() const {
  const auto v = to_array();
  for (int i = 0; i < 6; ++i)
    if (!LatentLayout::w_intervals()[i].contains(v[i])) return false;
  return true;
}

bool MechState::in_range() const {
  const auto v = to_array();
  for (int i = 0; i < 4; ++i)
    if (!LatentLayout::x0_intervals()[i].contains(v[i])) return false;
  return true;
}

MechState derivatives(const MechState& s, const MechParams& p, double u_t, double V_G) {
  if (!std::isfinite(s.G) || !std::isfinite(s.X) || !std::isfinite(s.G1) || !std::isfinite(s.G2)) {
    throw Error(ErrorKind::NonFiniteState, "state is not finite");
  }
  const double insulin = p.M_I * std::max(s.G - p.G_b, 0.0);
  MechState d;
  d.G = -s.X * s.G - p.S_G * (s.G - p.G_b) + s.G2 / p.tau_m;
  d.X = -p.p_2 * s.X + p.p_2 * p.S_I * insulin;
  d.G1 = -s.G1 / p.tau_m + u_t / V_G;
  d.G2 = (s.G1 - s.G2) / p.tau_m;
  return d;
}

namespace {

void check_config(const SimConfig& cfg) {
  if (cfg.substeps < 1 || !(cfg.dt_obs > 0.0) || !(cfg.V_G > 0.0)) {
    throw Error(ErrorKind::InvalidSpec, "simulation config needs substeps >= 1, dt_obs > 0, V_G > 0");
  }
}

// One Euler step; returns the pre-clamp state through `raw`.
MechState euler_step(const MechState& s, const MechParams& p, double u_t, const SimConfig& cfg,
                     MechState* raw = nullptr) {
  const MechState d = derivatives(s, p, u_t, cfg.V_G);
  const double dt = cfg.dt();
  MechState next{s.G + dt * d.G, s.X + dt * d.X, s.G1 + dt * d.G1, s.G2 + dt * d.G2};
  if (raw) *raw = next;
  if (!(std::abs(next.G) <= kBlowupThreshold)) {
    throw Error(ErrorKind::NumericalBlowup, "glucose left [-1e6, 1e6] during integration");
  }
  next.G = std::max(next.G, 0.0);
  next.X = std::max(next.X, 0.0);
  next.G1 = std::max(next.G1, 0.0);
  next.G2 = std::max(next.G2, 0.0);
  return next;
}

}  // namespace

Trajectory simulate(const MechState& x0, const MechParams& p, const CarbRate& u, const SimConfig& cfg) {
  check_config(cfg);
  Trajectory out{};
  out[0] = x0;
  MechState s = x0;
  for (int i = 0; i + 1 < kSeqLen; ++i) {
    for (int k = 0; k < cfg.substeps; ++k) s = euler_step(s, p, u[i], cfg);
    out[i + 1] = s;
  }
  return out;
}

std::array<double, kSeqLen> glucose_of(const Trajectory& traj) {
  std::array<double, kSeqLen> g{};
  for (int i = 0; i < kSeqLen; ++i) g[i] = traj[i].G;
  return g;
}

SimGradient simulate_vjp(const MechState& x0, const MechParams& p, const CarbRate& u, const SimConfig& cfg,
                         std::span<const double, kSeqLen> d_glucose, std::array<double, kSeqLen>* glucose_out) {
  check_config(cfg);
  const int steps = (kSeqLen - 1) * cfg.substeps;
  std::vector<MechState> states(steps + 1);
  std::vector<MechState> raw(steps + 1);
  states[0] = x0;
  for (int n = 0; n < steps; ++n) states[n + 1] = euler_step(states[n], p, u[n / cfg.substeps], cfg, &raw[n + 1]);
  if (glucose_out) {
    for (int i = 0; i < kSeqLen; ++i) (*glucose_out)[i] = states[i * cfg.substeps].G;
  }

  SimGradient grad;
  const double dt = cfg.dt();
  const double tau = p.tau_m;
  // Adjoint of the post-clamp state at step n.
  double aG = d_glucose[kSeqLen - 1], aX = 0.0, aG1 = 0.0, aG2 = 0.0;
  for (int n = steps; n > 0; --n) {
    // Back through the clamp into the raw Euler output.
    if (raw[n].G < 0.0) aG = 0.0;
    if (raw[n].X < 0.0) aX = 0.0;
    if (raw[n].G1 < 0.0) aG1 = 0.0;
    if (raw[n].G2 < 0.0) aG2 = 0.0;

    const MechState& s = states[n - 1];
    const int interval = (n - 1) / cfg.substeps;
    const double excess = s.G - p.G_b;
    const double on = excess > 0.0 ? 1.0 : 0.0;
    const double insulin = p.M_I * std::max(excess, 0.0);

    // Parameter and input sensitivities, scaled by dt.
    grad.params[0] += dt * (aG * (-s.G2 / (tau * tau)) + aG1 * (s.G1 / (tau * tau)) +
                            aG2 * (-(s.G1 - s.G2) / (tau * tau)));
    grad.params[1] += dt * (aG * p.S_G + aX * (-p.p_2 * p.S_I * p.M_I * on));
    grad.params[2] += dt * (aG * (-excess));
    grad.params[3] += dt * (aX * (-s.X + p.S_I * insulin));
    grad.params[4] += dt * (aX * p.p_2 * insulin);
    grad.params[5] += dt * (aX * p.p_2 * p.S_I * std::max(excess, 0.0));
    grad.u[interval] += dt * aG1 / cfg.V_G;

    // State Jacobian transpose: a_prev = (I + dt * J)^T a.
    const double nG = aG + dt * (aG * (-s.X - p.S_G) + aX * (p.p_2 * p.S_I * p.M_I * on));
    const double nX = aX + dt * (aG * (-s.G) + aX * (-p.p_2));
    const double nG1 = aG1 + dt * (aG1 * (-1.0 / tau) + aG2 * (1.0 / tau));
    const double nG2 = aG2 + dt * (aG * (1.0 / tau) + aG2 * (-1.0 / tau));
    aG = nG;
    aX = nX;
    aG1 = nG1;
    aG2 = nG2;

    const int prev = n - 1;
    if (prev % cfg.substeps == 0) aG += d_glucose[prev / cfg.substeps];
  }
  grad.x0 = {aG, aX, aG1, aG2};
  return grad;
}

CarbRate carbs_to_rate(std::span<const double, kSeqLen> grams) {
  constexpr double kPulseMinutes = 15.0;
  const int width = static_cast<int>(kPulseMinutes / kSampleMinutes);
  CarbRate u{};
  for (int t = 0; t < kSeqLen; ++t) {
    if (!(grams[t] > 0.0)) continue;
    const double rate = grams[t] * 1000.0 / kPulseMinutes;
    for (int k = 0; k < width && t + k < kSeqLen; ++k) u[t + k] += rate;
  }
  for (auto& v : u) v = std::min(v, bounds::kCarbRate.hi);
  return u;
}

std::array<double, kSeqLen> logged_carbs(const PpgrRecord& record) {
  std::array<double, kSeqLen> g{};
  for (int t = 0; t < kSeqLen; ++t) g[t] = record.meals[t][kCarbs].value_or(0.0);
  return g;
}

// --- cohort spec -----------------------------------------------------------

CohortSpec CohortSpec::default_spec() {
  CohortSpec spec;
  GroupSpec pre;
  pre.name = "prediabetes";
  pre.diagnosis = Diagnosis::Prediabetes;
  pre.persons = 15;
  pre.records_per_person = 10;
  pre.params = {NormalSpec{25.0, 4.0},   NormalSpec{105.0, 8.0}, NormalSpec{0.014, 0.002},
                NormalSpec{0.045, 0.008}, NormalSpec{6e-4, 1e-4}, NormalSpec{1.6, 0.3}};
  pre.age = {52.0, 9.0};
  pre.weight = {82.0, 12.0};
  GroupSpec t2d;
  t2d.name = "t2d";
  t2d.diagnosis = Diagnosis::T2D;
  t2d.persons = 15;
  t2d.records_per_person = 10;
  t2d.params = {NormalSpec{40.0, 6.0},   NormalSpec{150.0, 15.0}, NormalSpec{0.008, 0.0015},
                NormalSpec{0.03, 0.006},  NormalSpec{3e-4, 8e-5},  NormalSpec{0.8, 0.2}};
  t2d.age = {58.0, 9.0};
  t2d.weight = {92.0, 14.0};
  spec.groups = {pre, t2d};
  return spec;
}

void CohortSpec::disable_corruption() {
  noise_sd = 0.0;
  jitter_prob = 0.0;
  rescale_prob = 0.0;
  delete_prob = 0.0;
  glucose_missing_prob = 0.0;
  channel_missing_prob = 0.0;
}

namespace {

constexpr const char* kParamKeys[6] = {"tau_m", "G_b", "S_G", "p_2", "S_I", "M_I"};

NormalSpec read_normal(const KeyValueConfig& cfg, const std::string& key, NormalSpec fallback) {
  auto v = cfg.get(key);
  if (!v) return fallback;
  const auto cells = split_csv_line(*v);
  if (cells.size() != 2) throw Error(ErrorKind::InvalidSpec, key + " must be 'mean, sd'");
  try {
    return {parse_real(cells[0], key), parse_real(cells[1], key)};
  } catch (const Error&) {
    throw Error(ErrorKind::InvalidSpec, key + " must be 'mean, sd'");
  }
}

std::string write_normal(NormalSpec n) { return format_real(n.mean) + ", " + format_real(n.sd); }

void check(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::InvalidSpec, what);
}

bool is_prob(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

CohortSpec CohortSpec::from_config(const KeyValueConfig& cfg) {
  CohortSpec spec = default_spec();
  {
    const auto defaults = spec.groups;
    spec.groups.clear();
    for (const auto& raw_name : split_csv_line(cfg.get_string("cohort.groups", "prediabetes, t2d"))) {
      const std::string name(trim(raw_name));
      check(!name.empty(), "cohort.groups has an empty name");
      GroupSpec g = defaults[spec.groups.size() % defaults.size()];
      g.name = name;
      const std::string prefix = "group." + name + ".";
      const std::string dx = cfg.get_string(prefix + "diagnosis", to_string(g.diagnosis));
      try {
        auto parsed = parse_diagnosis(dx);
        check(parsed.has_value(), prefix + "diagnosis must be set");
        g.diagnosis = *parsed;
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::InvalidSpec) throw;
        throw Error(ErrorKind::InvalidSpec, prefix + "diagnosis: " + dx);
      }
      g.persons = static_cast<int>(cfg.get_int(prefix + "persons", g.persons));
      g.records_per_person = static_cast<int>(cfg.get_int(prefix + "records_per_person", g.records_per_person));
      for (int i = 0; i < 6; ++i) g.params[i] = read_normal(cfg, prefix + kParamKeys[i], g.params[i]);
      g.age = read_normal(cfg, prefix + "age", g.age);
      g.weight = read_normal(cfg, prefix + "weight", g.weight);
      spec.groups.push_back(g);
    }
  }
  spec.record_param_jitter = cfg.get_real("cohort.record_param_jitter", spec.record_param_jitter);
  spec.noise_sd = cfg.get_real("cohort.noise_sd", spec.noise_sd);
  spec.meals_min = static_cast<int>(cfg.get_int("cohort.meals_min", spec.meals_min));
  spec.meals_max = static_cast<int>(cfg.get_int("cohort.meals_max", spec.meals_max));
  spec.carbs_min = cfg.get_real("cohort.carbs_min", spec.carbs_min);
  spec.carbs_max = cfg.get_real("cohort.carbs_max", spec.carbs_max);
  spec.extra_meal_first = static_cast<int>(cfg.get_int("cohort.extra_meal_first", spec.extra_meal_first));
  spec.extra_meal_last = static_cast<int>(cfg.get_int("cohort.extra_meal_last", spec.extra_meal_last));
  spec.g0_offset_sd = cfg.get_real("cohort.g0_offset_sd", spec.g0_offset_sd);
  spec.x0_max = cfg.get_real("cohort.x0_max", spec.x0_max);
  spec.g1_max = cfg.get_real("cohort.g1_max", spec.g1_max);
  spec.g2_max = cfg.get_real("cohort.g2_max", spec.g2_max);
  spec.jitter_prob = cfg.get_real("corruption.jitter_prob", spec.jitter_prob);
  spec.jitter_min_minutes = cfg.get_real("corruption.jitter_min_minutes", spec.jitter_min_minutes);
  spec.jitter_max_minutes = cfg.get_real("corruption.jitter_max_minutes", spec.jitter_max_minutes);
  spec.rescale_prob = cfg.get_real("corruption.rescale_prob", spec.rescale_prob);
  spec.carb_scale_min = cfg.get_real("corruption.carb_scale_min", spec.carb_scale_min);
  spec.carb_scale_max = cfg.get_real("corruption.carb_scale_max", spec.carb_scale_max);
  spec.delete_prob = cfg.get_real("corruption.delete_prob", spec.delete_prob);
  spec.glucose_missing_prob = cfg.get_real("corruption.glucose_missing_prob", spec.glucose_missing_prob);
  spec.channel_missing_prob = cfg.get_real("corruption.channel_missing_prob", spec.channel_missing_prob);
  spec.sim.substeps = static_cast<int>(cfg.get_int("sim.substeps", spec.sim.substeps));
  spec.sim.V_G = cfg.get_real("sim.V_G", spec.sim.V_G);
  spec.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(spec.seed)));
  spec.validate();
  return spec;
}

void CohortSpec::write(KeyValueConfig& cfg) const {
  std::string names;
  for (const auto& g : groups) names += (names.empty() ? "" : ",") + g.name;
  cfg.set("cohort.groups", names);
  for (const auto& g : groups) {
    const std::string prefix = "group." + g.name + ".";
    cfg.set(prefix + "diagnosis", to_string(g.diagnosis));
    cfg.set(prefix + "persons", std::to_string(g.persons));
    cfg.set(prefix + "records_per_person", std::to_string(g.records_per_person));
    for (int i = 0; i < 6; ++i) cfg.set(prefix + kParamKeys[i], write_normal(g.params[i]));
    cfg.set(prefix + "age", write_normal(g.age));
    cfg.set(prefix + "weight", write_normal(g.weight));
  }
  cfg.set("cohort.record_param_jitter", format_real(record_param_jitter));
  cfg.set("cohort.noise_sd", format_real(noise_sd));
  cfg.set("cohort.meals_min", std::to_string(meals_min));
  cfg.set("cohort.meals_max", std::to_string(meals_max));
  cfg.set("cohort.carbs_min", format_real(carbs_min));
  cfg.set("cohort.carbs_max", format_real(carbs_max));
  cfg.set("cohort.extra_meal_first", std::to_string(extra_meal_first));
  cfg.set("cohort.extra_meal_last", std::to_string(extra_meal_last));
  cfg.set("cohort.g0_offset_sd", format_real(g0_offset_sd));
  cfg.set("cohort.x0_max", format_real(x0_max));
  cfg.set("cohort.g1_max", format_real(g1_max));
  cfg.set("cohort.g2_max", format_real(g2_max));
  cfg.set("corruption.jitter_prob", format_real(jitter_prob));
  cfg.set("corruption.jitter_min_minutes", format_real(jitter_min_minutes));
  cfg.set("corruption.jitter_max_minutes", format_real(jitter_max_minutes));
  cfg.set("corruption.rescale_prob", format_real(rescale_prob));
  cfg.set("corruption.carb_scale_min", format_real(carb_scale_min));
  cfg.set("corruption.carb_scale_max", format_real(carb_scale_max));
  cfg.set("corruption.delete_prob", format_real(delete_prob));
  cfg.set("corruption.glucose_missing_prob", format_real(glucose_missing_prob));
  cfg.set("corruption.channel_missing_prob", format_real(channel_missing_prob));
  cfg.set("sim.substeps", std::to_string(sim.substeps));
  cfg.set("sim.V_G", format_real(sim.V_G));
  cfg.set("seed", std::to_string(seed));
}

void CohortSpec::validate() const {
  check(groups.size() >= 2, "cohort needs at least two groups");
  for (const auto& g : groups) {
    check(g.persons >= 1 && g.records_per_person >= 1, "group " + g.name + " needs persons and records >= 1");
    for (int i = 0; i < 6; ++i) {
      const auto iv = LatentLayout::w_intervals()[i];
      check(g.params[i].sd >= 0.0 && g.params[i].mean > iv.lo && g.params[i].mean < iv.hi,
            "group " + g.name + " " + kParamKeys[i] + " mean must lie inside its range and sd >= 0");
    }
    check(g.age.sd >= 0.0 && g.weight.sd >= 0.0 && g.age.mean > 0.0 && g.weight.mean > 0.0,
          "group " + g.name + " demographics");
  }
  check(record_param_jitter >= 0.0 && noise_sd >= 0.0, "jitter and noise must be >= 0");
  check(meals_min >= 1 && meals_max >= meals_min, "meals_min >= 1 and meals_max >= meals_min");
  check(carbs_min > 0.0 && carbs_max >= carbs_min, "0 < carbs_min <= carbs_max");
  check(extra_meal_first >= 0 && extra_meal_last < kSeqLen && extra_meal_first <= extra_meal_last,
        "extra meal window must lie inside [0,59]");
  check(g0_offset_sd >= 0.0 && x0_max >= 0.0 && x0_max <= 1.0 && g1_max >= 0.0 && g1_max <= 1.0 &&
            g2_max >= 0.0 && g2_max <= 100.0,
        "initial-state spreads must stay within their ranges");
  check(is_prob(jitter_prob) && is_prob(rescale_prob) && is_prob(delete_prob) && is_prob(glucose_missing_prob) &&
            is_prob(channel_missing_prob),
        "corruption probabilities must lie in [0,1]");
  check(jitter_min_minutes <= jitter_max_minutes, "jitter_min_minutes <= jitter_max_minutes");
  check(carb_scale_min > 0.0 && carb_scale_max >= carb_scale_min, "0 < carb_scale_min <= carb_scale_max");
  check(sim.substeps >= 1 && sim.V_G > 0.0, "sim.substeps >= 1 and sim.V_G > 0");
}

// --- cohort generation -----------------------------------------------------

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

bool bernoulli(Rng& rng, double p) { return uniform(rng, 0.0, 1.0) < p; }

/// Normal truncated to the open interval by rejection; falls back to the
/// nearest interior point after too many rejections.
double truncated_normal(Rng& rng, double mean, double sd, Interval iv) {
  const double margin = 1e-6 * iv.width();
  const double lo = iv.lo + margin, hi = iv.hi - margin;
  if (sd > 0.0) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double x = mean + sd * normal(rng);
      if (x > lo && x < hi) return x;
    }
  }
  return std::clamp(mean, lo, hi);
}

struct PersonDraw {
  std::string person_id;
  const GroupSpec* group = nullptr;
  MechParams params;
  Demographics demo;
  std::uint64_t seed = 0;
};

std::string padded(int value, int width) {
  std::string s = std::to_string(value);
  return std::string(width > static_cast<int>(s.size()) ? width - s.size() : 0, '0') + s;
}

}  // namespace

Cohort generate_cohort(const CohortSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<PersonDraw> persons;
  int person_index = 0;
  for (const auto& g : spec.groups) {
    for (int p = 0; p < g.persons; ++p, ++person_index) {
      PersonDraw d;
      d.person_id = "p" + padded(person_index, 4);
      d.group = &g;
      d.seed = derive_seed(seed, static_cast<std::uint64_t>(person_index));
      Rng rng(d.seed);
      std::array<double, 6> w{};
      for (int i = 0; i < 6; ++i) {
        w[i] = truncated_normal(rng, g.params[i].mean, g.params[i].sd, LatentLayout::w_intervals()[i]);
      }
      d.params = MechParams::from_array(w);
      d.demo.age = std::max(18.0, g.age.mean + g.age.sd * normal(rng));
      d.demo.weight = std::max(40.0, g.weight.mean + g.weight.sd * normal(rng));
      d.demo.sex = bernoulli(rng, 0.5) ? Sex::F : Sex::M;
      persons.push_back(d);
    }
  }

  struct Job {
    const PersonDraw* person;
    int record;
  };
  std::vector<Job> jobs;
  for (const auto& p : persons)
    for (int r = 0; r < p.group->records_per_person; ++r) jobs.push_back({&p, r});

  Cohort cohort;
  cohort.data.records.resize(jobs.size());
  cohort.truth.resize(jobs.size());

  parallel_for(jobs.size(), [&](std::size_t j) {
    const PersonDraw& person = *jobs[j].person;
    Rng rng(derive_seed(person.seed, static_cast<std::uint64_t>(jobs[j].record) + 1));

    std::array<double, 6> w = person.params.to_array();
    for (int i = 0; i < 6; ++i) {
      w[i] = truncated_normal(rng, w[i], spec.record_param_jitter * w[i], LatentLayout::w_intervals()[i]);
    }
    const MechParams params = MechParams::from_array(w);
    MechState x0;
    x0.G = truncated_normal(rng, params.G_b, spec.g0_offset_sd, bounds::kG0);
    x0.X = uniform(rng, 0.0, spec.x0_max);
    x0.G1 = uniform(rng, 0.0, spec.g1_max);
    x0.G2 = uniform(rng, 0.0, spec.g2_max);

    const int n_meals = std::uniform_int_distribution<int>(spec.meals_min, spec.meals_max)(rng);
    std::vector<int> meal_times{kMealIndex};
    std::vector<double> meal_carbs{uniform(rng, spec.carbs_min, spec.carbs_max)};
    for (int m = 1; m < n_meals; ++m) {
      meal_times.push_back(std::uniform_int_distribution<int>(spec.extra_meal_first, spec.extra_meal_last)(rng));
      meal_carbs.push_back(uniform(rng, spec.carbs_min, spec.carbs_max));
    }
    std::array<double, kSeqLen> grams{};
    for (std::size_t m = 0; m < meal_times.size(); ++m) grams[meal_times[m]] += meal_carbs[m];
    const CarbRate u = carbs_to_rate(grams);
    const Trajectory traj = simulate(x0, params, u, spec.sim);

    PpgrRecord rec;
    rec.person_id = person.person_id;
    rec.ppgr_id = person.person_id + "_r" + padded(jobs[j].record, 3);
    rec.demographics = person.demo;
    rec.diagnosis = person.group->diagnosis;
    for (int t = 0; t < kSeqLen; ++t) {
      double g = traj[t].G;
      if (spec.noise_sd > 0.0) g += spec.noise_sd * normal(rng);
      g = std::clamp(g, kGlucoseMin, kGlucoseMax);
      const bool missing = spec.glucose_missing_prob > 0.0 && bernoulli(rng, spec.glucose_missing_prob);
      if (!missing) rec.glucose[t] = g;
      rec.meals[t].fill(0.0);
    }

    for (std::size_t m = 0; m < meal_times.size(); ++m) {
      const bool deleted = bernoulli(rng, spec.delete_prob);
      const bool jittered = bernoulli(rng, spec.jitter_prob);
      const double shift_min = uniform(rng, spec.jitter_min_minutes, spec.jitter_max_minutes);
      const bool rescaled = bernoulli(rng, spec.rescale_prob);
      const double scale = uniform(rng, spec.carb_scale_min, spec.carb_scale_max);
      const double sugar_frac = uniform(rng, 0.2, 0.6);
      const double fiber = uniform(rng, 0.0, 4.0);
      const double fat = uniform(rng, 2.0, 20.0);
      const double protein = uniform(rng, 5.0, 30.0);
      const double water = uniform(rng, 50.0, 250.0);
      std::array<bool, kNumMealChannels> blank{};
      for (int c = 0; c < kNumMealChannels; ++c) {
        blank[c] = c != kCarbs && spec.channel_missing_prob > 0.0 && bernoulli(rng, spec.channel_missing_prob);
      }
      if (deleted) continue;

      int t = meal_times[m];
      if (jittered) t = std::clamp(t + static_cast<int>(std::lround(shift_min / kSampleMinutes)), 0, kSeqLen - 1);
      const double carbs = meal_carbs[m] * (rescaled ? scale : 1.0);
      const std::array<double, kNumMealChannels> values{carbs + fiber + fat + protein + water, carbs,
                                                        carbs * sugar_frac, fiber, fat, protein};
      for (int c = 0; c < kNumMealChannels; ++c) {
        auto& cell = rec.meals[t][c];
        if (blank[c]) {
          cell.reset();
        } else if (cell) {
          *cell += values[c];
        }
      }
    }

    GroundTruth gt;
    gt.ppgr_id = rec.ppgr_id;
    gt.person_id = rec.person_id;
    gt.group = person.group->name;
    gt.params = params;
    gt.x0 = x0;
    gt.u = u;
    gt.meal_times = meal_times;
    cohort.data.records[j] = std::move(rec);
    cohort.truth[j] = std::move(gt);
  });
  return cohort;
}

void write_ground_truth_csv(std::ostream& out, const std::vector<GroundTruth>& truth, const Provenance& prov) {
  out << provenance_line(prov) << "\n";
  out << "ppgr_id,person_id,group,tau_m,G_b,S_G,p_2,S_I,M_I,G0,X0,G1_0,G2_0,meal_times";
  for (int t = 0; t < kSeqLen; ++t) out << ",u_" << t;
  out << "\n";
  for (const auto& gt : truth) {
    out << gt.ppgr_id << ',' << gt.person_id << ',' << gt.group;
    for (double v : gt.params.to_array()) out << ',' << format_real(v);
    for (double v : gt.x0.to_array()) out << ',' << format_real(v);
    out << ',';
    for (std::size_t m = 0; m < gt.meal_times.size(); ++m) out << (m ? ";" : "") << gt.meal_times[m];
    for (double v : gt.u) out << ',' << format_real(v);
    out << "\n";
  }
}

std::vector<GroundTruth> read_ground_truth_csv(std::istream& in) {
  std::vector<GroundTruth> out;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (trim(line).empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto cells = split_csv_line(line);
    if (cells.size() != 14 + kSeqLen) throw Error(ErrorKind::MissingColumn, "ground truth row has wrong width");
    GroundTruth gt;
    gt.ppgr_id = cells[0];
    gt.person_id = cells[1];
    gt.group = cells[2];
    std::array<double, 6> w{};
    for (int i = 0; i < 6; ++i) w[i] = parse_real(cells[3 + i], "ground truth");
    gt.params = MechParams::from_array(w);
    std::array<double, 4> x{};
    for (int i = 0; i < 4; ++i) x[i] = parse_real(cells[9 + i], "ground truth");
    gt.x0 = MechState::from_array(x);
    std::istringstream meals(cells[13]);
    std::string tok;
    while (std::getline(meals, tok, ';'))
      if (!tok.empty()) gt.meal_times.push_back(static_cast<int>(parse_real(tok, "meal_times")));
    for (int t = 0; t < kSeqLen; ++t) gt.u[t] = parse_real(cells[14 + t], "ground truth u");
    out.push_back(std::move(gt));
  }
  return out;
}

}  // namespace glyco
