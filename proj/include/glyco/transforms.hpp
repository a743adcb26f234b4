#pragma once

#include <array>
#include <string>

#include "glyco/datamodel.hpp"

namespace glyco {

class KeyValueConfig;

/// Open interval (lo, hi) reached through a rescaled logistic.
struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  double width() const { return hi - lo; }
  bool contains(double y) const { return y >= lo && y <= hi; }
};

double logistic(double x);

/// lo + (hi - lo) * logistic(x); strictly increasing onto (lo, hi).
double constrain(double x, Interval t);
/// d constrain / dx.
double constrain_derivative(double x, Interval t);
/// logit((y - lo) / (hi - lo)); throws OutOfInterval unless lo < y < hi.
double unconstrain(double y, Interval t);

/// Physiological ranges for the mechanistic latents.
namespace bounds {
inline constexpr Interval kTauM{10.0, 60.0};
inline constexpr Interval kGb{80.0, 200.0};
inline constexpr Interval kSG{5e-3, 2e-2};
inline constexpr Interval kP2{1.0 / 60.0, 1.0 / 15.0};
inline constexpr Interval kSI{1e-4, 1e-3};
inline constexpr Interval kMI{0.1, 3.0};

inline constexpr Interval kG0{50.0, 300.0};
inline constexpr Interval kX0{0.0, 1.0};
inline constexpr Interval kG10{0.0, 1.0};
inline constexpr Interval kG20{0.0, 100.0};

inline constexpr Interval kCarbRate{0.0, 1000.0};  // mg/min
}  // namespace bounds

/// z = (u' [60], x0' [4], w' [6]).
struct LatentLayout {
  static constexpr int kU = kSeqLen;
  static constexpr int kX0 = 4;
  static constexpr int kW = 6;
  static constexpr int kTotal = kU + kX0 + kW;
  static constexpr int kUOffset = 0;
  static constexpr int kX0Offset = kU;
  static constexpr int kWOffset = kU + kX0;

  static const std::array<Interval, kX0>& x0_intervals();
  static const std::array<Interval, kW>& w_intervals();
  static Interval interval(int dim);
  static std::string name(int dim);
};

/// Fixed factorized normal prior over the unconstrained latent z.
struct ExpertPrior {
  std::array<double, LatentLayout::kTotal> mean{};
  std::array<double, LatentLayout::kTotal> sd{};

  void write(KeyValueConfig& cfg) const;
  static ExpertPrior read(const KeyValueConfig& cfg);
};

ExpertPrior default_prior();

/// KL(N(mq, sq^2) || N(mp, sp^2)).
double kl_normal(double mq, double sq, double mp, double sp);

}  // namespace glyco
