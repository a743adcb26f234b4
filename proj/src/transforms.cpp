#include "glyco/transforms.hpp"

#include <cmath>
#include <sstream>

#include "glyco/error.hpp"
#include "glyco/textio.hpp"

namespace glyco {

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double constrain(double x, Interval t) { return t.lo + t.width() * logistic(x); }

double constrain_derivative(double x, Interval t) {
  const double s = logistic(x);
  return t.width() * s * (1.0 - s);
}

double unconstrain(double y, Interval t) {
  if (!(y > t.lo && y < t.hi)) {
    std::ostringstream ss;
    ss << y << " not inside (" << t.lo << ", " << t.hi << ")";
    throw Error(ErrorKind::OutOfInterval, ss.str());
  }
  const double p = (y - t.lo) / t.width();
  return std::log(p) - std::log1p(-p);
}

const std::array<Interval, LatentLayout::kX0>& LatentLayout::x0_intervals() {
  static const std::array<Interval, kX0> v{bounds::kG0, bounds::kX0, bounds::kG10, bounds::kG20};
  return v;
}

const std::array<Interval, LatentLayout::kW>& LatentLayout::w_intervals() {
  static const std::array<Interval, kW> v{bounds::kTauM, bounds::kGb, bounds::kSG,
                                          bounds::kP2,   bounds::kSI, bounds::kMI};
  return v;
}

Interval LatentLayout::interval(int dim) {
  if (dim < kX0Offset) return bounds::kCarbRate;
  if (dim < kWOffset) return x0_intervals()[dim - kX0Offset];
  return w_intervals()[dim - kWOffset];
}

std::string LatentLayout::name(int dim) {
  static const char* x0[] = {"G0", "X0", "G1_0", "G2_0"};
  static const char* w[] = {"tau_m", "G_b", "S_G", "p_2", "S_I", "M_I"};
  if (dim < kX0Offset) return "u" + std::to_string(dim);
  if (dim < kWOffset) return x0[dim - kX0Offset];
  return w[dim - kWOffset];
}

ExpertPrior default_prior() {
  ExpertPrior p;
  for (int t = 0; t < LatentLayout::kU; ++t) {
    p.mean[LatentLayout::kUOffset + t] = 0.0;
    p.sd[LatentLayout::kUOffset + t] = 10.0;
  }
  const std::array<double, 4> x0_mean{120.0, 0.1, 0.1, 20.0};
  const std::array<double, 4> x0_sd{1.0, 1.0, 1.0, 2.0};
  for (int i = 0; i < LatentLayout::kX0; ++i) {
    p.mean[LatentLayout::kX0Offset + i] = unconstrain(x0_mean[i], LatentLayout::x0_intervals()[i]);
    p.sd[LatentLayout::kX0Offset + i] = x0_sd[i];
  }
  // Ordered as (tau_m, G_b, S_G, p_2, S_I, M_I).
  const std::array<double, 6> w_mean{30.0, 120.0, 1e-2, 1.0 / 30.0, 5e-4, 1.0};
  const std::array<double, 6> w_sd{2.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  for (int i = 0; i < LatentLayout::kW; ++i) {
    p.mean[LatentLayout::kWOffset + i] = unconstrain(w_mean[i], LatentLayout::w_intervals()[i]);
    p.sd[LatentLayout::kWOffset + i] = w_sd[i];
  }
  return p;
}

namespace {

std::string join(const std::array<double, LatentLayout::kTotal>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += format_real(v[i]);
  }
  return out;
}

std::array<double, LatentLayout::kTotal> split_reals(const std::string& text, const std::string& key) {
  const auto cells = split_csv_line(text);
  if (cells.size() != LatentLayout::kTotal) {
    throw Error(ErrorKind::InvalidConfig, key + " must list 70 values");
  }
  std::array<double, LatentLayout::kTotal> out{};
  for (std::size_t i = 0; i < cells.size(); ++i) out[i] = parse_real(cells[i], key);
  return out;
}

}  // namespace

void ExpertPrior::write(KeyValueConfig& cfg) const {
  cfg.set("prior.mean", join(mean));
  cfg.set("prior.sd", join(sd));
}

ExpertPrior ExpertPrior::read(const KeyValueConfig& cfg) {
  ExpertPrior p = default_prior();
  if (auto m = cfg.get("prior.mean")) p.mean = split_reals(*m, "prior.mean");
  if (auto s = cfg.get("prior.sd")) p.sd = split_reals(*s, "prior.sd");
  for (double s : p.sd) {
    if (!(s > 0.0) || !std::isfinite(s)) throw Error(ErrorKind::InvalidConfig, "prior.sd must be positive");
  }
  return p;
}

double kl_normal(double mq, double sq, double mp, double sp) {
  const double d = mq - mp;
  return std::log(sp / sq) + (sq * sq + d * d) / (2.0 * sp * sp) - 0.5;
}

}  // namespace glyco
