#pragma once

#include <array>
#include <span>

#include "glyco/datamodel.hpp"

namespace glyco {

inline constexpr double kTirLow = 70.0;
inline constexpr double kTirHigh = 180.0;

struct ExpertFeatures {
  double mean = 0.0;        // mg/dL
  double sd = 0.0;          // population sd, mg/dL
  double cv = 0.0;          // percent
  double max = 0.0;
  double min = 0.0;
  double tir = 0.0;         // percent of readings in [70, 180]
  double arc_length = 0.0;  // sum of sqrt(dt^2 + dG^2), dt = 5
  double j_index = 0.0;
  double mage = 0.0;
  double iauc = 0.0;        // mg*min/dL above the meal-time level

  static constexpr std::array<const char*, 10> kNames{"mean", "sd",         "cv",      "max",  "min",
                                                      "tir",  "arc_length", "j_index", "mage", "iauc"};
  std::array<double, 10> to_array() const;
};

/// Interpolates missing readings first; needs at least two observed values.
ExpertFeatures expert_features(const PpgrRecord& record);
ExpertFeatures expert_features(std::span<const double, kSeqLen> glucose);

/// Turning-point MAGE on a complete trace with the given excursion threshold.
double mage(std::span<const double> glucose, double threshold);

}  // namespace glyco
