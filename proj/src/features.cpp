#include "glyco/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "glyco/error.hpp"

namespace glyco {

std::array<double, 10> ExpertFeatures::to_array() const {
  return {mean, sd, cv, max, min, tir, arc_length, j_index, mage, iauc};
}

double mage(std::span<const double> glucose, double threshold) {
  // Collapse plateaus, then keep interior turning points.
  std::vector<double> v;
  for (double g : glucose)
    if (v.empty() || g != v.back()) v.push_back(g);
  std::vector<double> ext;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    if ((v[i] - v[i - 1]) * (v[i + 1] - v[i]) < 0.0) ext.push_back(v[i]);
  }
  // Prune the smallest swing until every remaining swing exceeds the threshold.
  // Removing an interior pair keeps peaks and nadirs alternating.
  while (ext.size() >= 2) {
    std::size_t k = 0;
    double smallest = std::abs(ext[1] - ext[0]);
    for (std::size_t i = 1; i + 1 < ext.size(); ++i) {
      const double a = std::abs(ext[i + 1] - ext[i]);
      if (a < smallest) {
        smallest = a;
        k = i;
      }
    }
    if (smallest > threshold) break;
    if (k == 0) {
      ext.erase(ext.begin());
    } else if (k + 2 == ext.size()) {
      ext.pop_back();
    } else {
      ext.erase(ext.begin() + static_cast<std::ptrdiff_t>(k), ext.begin() + static_cast<std::ptrdiff_t>(k) + 2);
    }
  }
  if (ext.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < ext.size(); ++i) total += std::abs(ext[i + 1] - ext[i]);
  return total / static_cast<double>(ext.size() - 1);
}

ExpertFeatures expert_features(std::span<const double, kSeqLen> g) {
  ExpertFeatures f;
  const double n = kSeqLen;
  f.mean = std::accumulate(g.begin(), g.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : g) ss += (x - f.mean) * (x - f.mean);
  f.sd = std::sqrt(ss / n);
  f.cv = f.mean != 0.0 ? 100.0 * f.sd / f.mean : 0.0;
  f.max = *std::max_element(g.begin(), g.end());
  f.min = *std::min_element(g.begin(), g.end());
  const auto in_range = std::count_if(g.begin(), g.end(), [](double x) { return x >= kTirLow && x <= kTirHigh; });
  f.tir = 100.0 * static_cast<double>(in_range) / n;
  const double dt = kSampleMinutes;
  for (int i = 1; i < kSeqLen; ++i) f.arc_length += std::sqrt(dt * dt + (g[i] - g[i - 1]) * (g[i] - g[i - 1]));
  f.j_index = 0.001 * (f.mean + f.sd) * (f.mean + f.sd);
  f.mage = mage(g, f.sd);
  const double base = g[kMealIndex];
  for (int i = kMealIndex; i + 1 < kSeqLen; ++i) {
    f.iauc += 0.5 * dt * (std::max(g[i] - base, 0.0) + std::max(g[i + 1] - base, 0.0));
  }
  return f;
}

ExpertFeatures expert_features(const PpgrRecord& record) {
  if (record.observed_glucose() < 2) {
    throw Error(ErrorKind::DegenerateRecord, "record " + record.ppgr_id + " has fewer than 2 glucose readings");
  }
  const auto g = record.interpolated_glucose();
  return expert_features(std::span<const double, kSeqLen>(g));
}

}  // namespace glyco
