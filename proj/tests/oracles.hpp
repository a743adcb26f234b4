#pragma once

// Brute-force references used by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

namespace glyco::oracle {

struct Scores {
  double nmi = 0.0;
  double ami = 0.0;
  double homogeneity = 0.0;
  double completeness = 0.0;
};

inline double entropy_of(const std::vector<int>& x) {
  std::map<int, int> c;
  for (int v : x) ++c[v];
  double h = 0.0;
  const double n = static_cast<double>(x.size());
  for (const auto& [k, m] : c) h -= m / n * std::log(m / n);
  return h;
}

inline double joint_entropy(const std::vector<int>& a, const std::vector<int>& b) {
  int counts[8][8] = {};
  for (std::size_t i = 0; i < a.size(); ++i) ++counts[a[i]][b[i]];
  double h = 0.0;
  const double n = static_cast<double>(a.size());
  for (auto& row : counts)
    for (int m : row)
      if (m > 0) h -= m / n * std::log(m / n);
  return h;
}

/// H(A | B) straight from the definition.
inline double conditional_entropy(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<int, std::vector<int>> groups;
  for (std::size_t i = 0; i < a.size(); ++i) groups[b[i]].push_back(a[i]);
  double h = 0.0;
  for (const auto& [k, members] : groups) h += static_cast<double>(members.size()) / a.size() * entropy_of(members);
  return h;
}

inline bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
  return true;
}

/// Labels must be small non-negative ints (< 8); E[MI] by averaging over
/// every permutation of the predicted labels.
inline Scores scores(const std::vector<int>& truth, const std::vector<int>& pred) {
  const double hc = entropy_of(truth), hk = entropy_of(pred);
  const double mi = hc + hk - joint_entropy(truth, pred);
  Scores s;
  s.homogeneity = hc == 0.0 ? 1.0 : 1.0 - conditional_entropy(truth, pred) / hc;
  s.completeness = hk == 0.0 ? 1.0 : 1.0 - conditional_entropy(pred, truth) / hk;
  if (same_partition(truth, pred)) {
    s.nmi = s.ami = 1.0;
    return s;
  }
  if (hc == 0.0 || hk == 0.0) return s;
  const double mean_h = 0.5 * (hc + hk);
  s.nmi = mi / mean_h;
  std::vector<int> idx(pred.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<int> perm(pred.size());
  double total = 0.0;
  long long count = 0;
  do {
    for (std::size_t i = 0; i < idx.size(); ++i) perm[i] = pred[static_cast<std::size_t>(idx[i])];
    total += hc + hk - joint_entropy(truth, perm);
    ++count;
  } while (std::next_permutation(idx.begin(), idx.end()));
  const double emi = total / static_cast<double>(count);
  s.ami = std::clamp((mi - emi) / (mean_h - emi), 0.0, 1.0);
  return s;
}

/// Every labeling of n points up to renaming (restricted growth strings).
inline std::vector<std::vector<int>> set_partitions(int n) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(static_cast<std::size_t>(n), 0);
  auto rec = [&](auto&& self, int i, int used) -> void {
    if (i == n) {
      out.push_back(cur);
      return;
    }
    for (int v = 0; v <= used; ++v) {
      cur[static_cast<std::size_t>(i)] = v;
      self(self, i + 1, std::max(used, v + 1));
    }
  };
  if (n > 0) rec(rec, 0, 0);
  return out;
}

}  // namespace glyco::oracle
